//! Float math shims: std intrinsics when available, `libm` otherwise.
//!
//! Only the handful of functions the crate actually needs are wrapped; all
//! call sites go through this module so the no_std build differs in exactly
//! one place.

#![allow(dead_code)]

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("dualrail-core needs either the `std` or the `libm` feature");

macro_rules! shim {
    ($name:ident, $std_method:ident, $libm_fn:ident) => {
        #[inline]
        pub(crate) fn $name(x: f64) -> f64 {
            #[cfg(feature = "std")]
            {
                x.$std_method()
            }
            #[cfg(all(not(feature = "std"), feature = "libm"))]
            {
                libm::$libm_fn(x)
            }
        }
    };
}

shim!(abs, abs, fabs);
shim!(sqrt, sqrt, sqrt);
shim!(exp, exp, exp);
shim!(ln, ln, log);
shim!(floor, floor, floor);
shim!(round, round, round);

#[inline]
pub(crate) fn powf(x: f64, y: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.powf(y)
    }
    #[cfg(all(not(feature = "std"), feature = "libm"))]
    {
        libm::pow(x, y)
    }
}

#[inline]
pub(crate) fn hypot(x: f64, y: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.hypot(y)
    }
    #[cfg(all(not(feature = "std"), feature = "libm"))]
    {
        libm::hypot(x, y)
    }
}

#[inline]
pub(crate) fn copysign(x: f64, sign: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.copysign(sign)
    }
    #[cfg(all(not(feature = "std"), feature = "libm"))]
    {
        libm::copysign(x, sign)
    }
}

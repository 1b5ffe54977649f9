//! Float helpers routed through `libm` so results do not depend on `std`.

#[inline]
pub(crate) fn tanh(x: f32) -> f32 {
    libm::tanhf(x)
}

#[inline]
pub(crate) fn sqrt(x: f32) -> f32 {
    libm::sqrtf(x)
}

#[inline]
pub(crate) fn sqrt64(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn round64(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub(crate) fn floor64(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub(crate) fn sin(x: f32) -> f32 {
    libm::sinf(x)
}

#[inline]
pub(crate) fn cos(x: f32) -> f32 {
    libm::cosf(x)
}

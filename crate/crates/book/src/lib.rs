//! Runs the guide's code blocks as doc tests.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[doc = include_str!("../../../book/src/autodiff.md")]
mod autodiff {}

#[doc = include_str!("../../../book/src/losses.md")]
mod losses {}

#[doc = include_str!("../../../book/src/perturbation.md")]
mod perturbation {}

#[doc = include_str!("../../../book/src/experiments.md")]
mod experiments {}

#[doc = include_str!("../../../book/src/telemetry.md")]
mod telemetry {}

//! Normal distribution primitives and truncated-normal samplers.

mod bivariate;
mod gibbs;
mod normal;
mod truncated;

pub use bivariate::bivariate_norm_cdf;
pub(crate) use bivariate::bivariate_norm_cdf_unchecked;
pub use gibbs::{gibbs_truncated_mvn, GibbsKernel, TruncationBox};
pub use normal::{norm_cdf, norm_pdf, norm_quantile, norm_sf};
pub(crate) use normal::quantile_unchecked;
pub use truncated::sample_truncated_normal;

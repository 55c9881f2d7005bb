//! Sensitivity slopes, feature standardization and PCA.

mod pca;
mod sensitivity;
mod standardize;

pub use pca::{fit_pca, PcaModel, DEFAULT_VARIANCE_TARGET};
pub use sensitivity::{sensitivity_slopes, series_from_dataset, AcidSeries, SensitivityReport};
pub use standardize::{fit_standardizer, Standardizer, ZERO_VARIANCE_GUARD};

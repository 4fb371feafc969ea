//! Per-pixel normal prediction.
//!
//! A [`NormalPredictor`] turns one pixel's far-field-equivalent observations
//! into a unit normal. Two predictors exist: a closed-form Lambertian
//! least-squares fit and [`TinyNet`], a small convolutional network over the
//! observation map trained with hand-written backpropagation.

mod gradcheck;
mod lambertian;
mod net;
mod train;

pub use gradcheck::{gradient_check, gradient_check_params, GradientCheck};
pub use lambertian::{lambertian_ls_predict, LambertianFit, LambertianLs, SHADOW_THRESHOLD_REL};
pub use net::{Architecture, NetScalar, TinyNet, LEAKY_SLOPE};
pub use train::{train, EpochStats, TrainConfig, TrainReport};

use crate::obsmap::PixelObservation;
use crate::geometry::NormalMap;
use crate::{Error, Result, Vec3};

/// Maps a pixel's observations to a unit normal. Implementations are
/// deterministic and safe to call from many threads.
pub trait NormalPredictor: Sync {
    fn predict(&self, obs: &PixelObservation) -> Result<Vec3>;

    /// Prediction for the pixel at `(col, row)`. Only predictors that know
    /// the image layout need to override this.
    fn predict_at(&self, col: usize, row: usize, obs: &PixelObservation) -> Result<Vec3> {
        let _ = (col, row);
        self.predict(obs)
    }
}

/// Oracle predictor returning known normals, for isolating the other stages.
#[derive(Debug, Clone)]
pub struct GtLookup {
    pub normals: NormalMap,
}

impl NormalPredictor for GtLookup {
    fn predict(&self, _obs: &PixelObservation) -> Result<Vec3> {
        Err(Error::config("ground-truth lookup needs a pixel position"))
    }

    fn predict_at(&self, col: usize, row: usize, _obs: &PixelObservation) -> Result<Vec3> {
        if col >= self.normals.width() || row >= self.normals.height() || !*self.normals.mask.get(col, row) {
            return Err(Error::EmptyMask("no ground-truth normal at this pixel".into()));
        }
        Ok(*self.normals.vectors.get(col, row))
    }
}

impl<T: NetScalar> NormalPredictor for TinyNet<T> {
    fn predict(&self, obs: &PixelObservation) -> Result<Vec3> {
        self.predict_map(&obs.map())
    }
}

/// `‖a - b‖²` for unit vectors equals `2 (1 - cos θ)`.
pub fn normal_loss(pred: &Vec3, label: &Vec3) -> f64 {
    (pred - label).norm_squared()
}

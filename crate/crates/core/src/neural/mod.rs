//! Neural fields: the network, its optimizer and losses, and the training loops.

mod adam;
mod checkpoint;
mod latent;
mod loss;
mod mlp;
mod model;
mod train;

pub use adam::{AdamConfig, AdamState, NetworkOptimizer};
pub use checkpoint::Checkpoint;
pub use latent::{fit_latent, fit_latent_to, pseudo_ground_truth, LatentFit, LatentFitConfig};
pub use loss::{composite, l1, loss_composite, loss_gdf, Loss, LossWeights, NORM_EPSILON};
pub use mlp::{Layer, Mlp, MlpConfig, Real, Trace};
pub use model::{FieldValues, LatentTable, NeuralField, NeuralQuery, EVAL_CHUNK};
pub use train::{
    mean_loss, parameter_gradients, train_autodecoder, train_single, RegressionData, TrainConfig,
    TrainReport,
};

pub use loss::evaluate as evaluate_loss;

//! Classical clustering baselines: K-means++, maximum-likelihood EM and
//! criterion-based selection of the cluster count.

mod em;
mod kmeans;
mod select;

pub use em::{aic, argmax_rows, bic, em_fit, n_params, EmFit, EmOptions};
pub use kmeans::{kmeanspp, seed_centers, KMeansFit, LLOYD_MAX_ITER};
pub use select::{em_sweep, pick_best, select_all, select_k_criterion, silhouette, Candidate, Criterion, FitReport};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for restart `stream` of a fit seeded with `seed`.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

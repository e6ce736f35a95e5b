//! Metapopulation epidemic modelling: SIR dynamics, inference of the
//! inter-zone infection network from daily case counts, and tools to
//! evaluate, simulate, and rank with the result.
//!
//! A typical pipeline reads zones and daily counts, converts them to
//! incidence and infectious states, and fits a network:
//!
//! ```
//! use metapop::{synthetic, dynamics, inference, InferenceConfig};
//!
//! let pop = synthetic::random_metapopulation(5, 1).unwrap();
//! let h = synthetic::generate_scale_free_mobility(&pop, 1, 500.0, 2).unwrap();
//! let scenario = synthetic::SyntheticScenario::new(pop, h, 2e-5, 0.2, 0.0, 3).unwrap();
//! let seeds = synthetic::random_seed_counts(&scenario.pop, 1, 10.0, 4);
//! let outbreak = synthetic::generate_outbreak(&scenario, 30, &seeds).unwrap();
//! let states = dynamics::states_from_deltas(&outbreak.series, &scenario.pop).unwrap();
//! let cfg = InferenceConfig { max_iters: 200, ..Default::default() };
//! let fit = inference::spgd_infer(&states, None, &cfg, inference::Variant::Basic).unwrap();
//! assert_eq!(fit.network.len(), 5);
//! ```

pub mod domain;
pub mod dynamics;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod inference;
pub mod io;
pub mod synthetic;

pub use domain::{
    InferenceConfig, InfectionNetwork, Metapopulation, MobilityVolumes, OutbreakSeries, StateSeries, StepPolicy, Zone,
};
pub use error::{Error, Result};
pub use features::{FeatureTensor, RegressionWeights};
pub use inference::{InferenceResult, Variant};

//! Departure classification and activity regression from the first posts
//! of each user.

pub mod features;
pub mod linear;
pub mod protocol;

pub use features::{
    FeatureConfig, FeatureExtractor, FeatureMatrix, FeatureResources, FeatureSchema, FeatureSet, Family, RangeKind,
};
pub use linear::{evaluate_f1, evaluate_rmse, train_logistic, train_svr, LinearModel, Matrix, MinMaxScaler};
pub use protocol::{run_trial_protocol, Instances, ProtocolConfig, Task, TrialResults};

use crate::error::Result;
use crate::ingest::{Dataset, UserTrajectory};
use crate::labeling::{Status, UserLabel};

/// Departing and staying users, in user order, with features for every
/// range the protocol needs.
pub fn build_instances(
    dataset: &Dataset,
    labels: &[UserLabel],
    fcfg: &FeatureConfig,
    pcfg: &ProtocolConfig,
) -> Result<Instances> {
    let resources = FeatureResources::build(dataset, fcfg)?;
    let fx = FeatureExtractor::new(dataset, &resources, fcfg)?;
    let mut users: Vec<&UserTrajectory> = Vec::new();
    let mut departing = Vec::new();
    let mut target = Vec::new();
    for l in labels {
        if l.status == Status::Neither {
            continue;
        }
        if let Some(t) = dataset.trajectories.get(&l.user) {
            users.push(t);
            departing.push(l.status == Status::Departing);
            target.push(protocol::activity_target(l.future_post_count));
        }
    }
    let mut ranges = vec![(RangeKind::First, pcfg.prefix_len)];
    if !pcfg.sweep_sets.is_empty() {
        for range in [RangeKind::First, RangeKind::Last] {
            for &x in &pcfg.xs {
                if !ranges.contains(&(range, x)) {
                    ranges.push((range, x));
                }
            }
        }
    }
    let matrices = fx.extract(&users, &ranges)?;
    Ok(Instances {
        users: users.iter().map(|t| t.user.clone()).collect(),
        departing,
        target,
        matrices,
    })
}

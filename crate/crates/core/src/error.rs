use thiserror::Error;

use crate::commutativity::CommutativityError;
use crate::explorer::ExploreError;
use crate::graph_io::SchemaError;
use crate::program::ModelError;
use crate::scenario::ScenarioError;
use crate::statechart::ChartError;
use crate::trace_monoid::TraceError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Explore(#[from] ExploreError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Commutativity(#[from] CommutativityError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

//! Request and response bodies shared by the service and its clients.

use serde::{Deserialize, Serialize};
use snnfi_core::{CampaignOptions, FaultModel, Network, Sample};
use uuid::Uuid;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoldenRequest {
    pub network: Network,
    pub dataset: Vec<Sample>,
    #[serde(default = "yes")]
    pub parallel: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenResponse {
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    pub labels: Vec<usize>,
    pub layer_evaluations: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateCampaign {
    pub network: Network,
    #[serde(default)]
    pub options: CampaignOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignCreated {
    pub id: Uuid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InjectComplete {
    pub model: FaultModel,
    pub layer: usize,
}

/// Round count after a mutating call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundCount {
    pub rounds: usize,
    /// Rounds added by this call.
    pub added: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRequest {
    pub dataset: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

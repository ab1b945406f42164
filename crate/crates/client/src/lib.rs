//! Client for the snnfi campaign service, plus helpers shared by the `snnfi` CLI.

use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;
use snnfi_core::campaign::Preparation;
use snnfi_core::{CampaignOptions, CampaignResults, Fault, FaultModel, Network, Sample};
use snnfi_server::api::{
    CampaignCreated, CreateCampaign, ErrorBody, GoldenRequest, GoldenResponse, InjectComplete, RoundCount, RunRequest,
};
use uuid::Uuid;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("server replied {status}: {message}")]
    Api { status: StatusCode, message: String },
}

/// Thin async wrapper over the service's HTTP API.
#[derive(Debug, Clone)]
pub struct Client {
    http: reqwest::Client,
    base: String,
}

impl Client {
    pub fn new(base: impl Into<String>) -> Self {
        Self { http: reqwest::Client::new(), base: base.into().trim_end_matches('/').to_string() }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await.unwrap_or_default();
        let message = serde_json::from_str::<ErrorBody>(&text).map(|b| b.error).unwrap_or(text);
        Err(ClientError::Api { status, message })
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        Self::decode(self.http.post(format!("{}{path}", self.base)).json(body).send().await?).await
    }

    pub async fn health(&self) -> Result<(), ClientError> {
        let resp = self.http.get(format!("{}/health", self.base)).send().await?;
        if resp.status().is_success() {
            Ok(())
        } else {
            Err(ClientError::Api { status: resp.status(), message: "unhealthy".into() })
        }
    }

    pub async fn golden(&self, network: &Network, dataset: &[Sample], parallel: bool) -> Result<GoldenResponse, ClientError> {
        let req = GoldenRequest { network: network.clone(), dataset: dataset.to_vec(), parallel };
        self.post("/v1/golden", &req).await
    }

    pub async fn create_campaign(&self, network: &Network, options: &CampaignOptions) -> Result<Uuid, ClientError> {
        let req = CreateCampaign { network: network.clone(), options: options.clone() };
        let created: CampaignCreated = self.post("/v1/campaigns", &req).await?;
        Ok(created.id)
    }

    pub async fn inject(&self, id: Uuid, fault: &Fault) -> Result<RoundCount, ClientError> {
        self.post(&format!("/v1/campaigns/{id}/inject"), fault).await
    }

    pub async fn then_inject(&self, id: Uuid, faults: &[Fault]) -> Result<RoundCount, ClientError> {
        self.post(&format!("/v1/campaigns/{id}/then_inject"), &faults).await
    }

    pub async fn inject_complete(&self, id: Uuid, model: &FaultModel, layer: usize) -> Result<RoundCount, ClientError> {
        let req = InjectComplete { model: model.clone(), layer };
        self.post(&format!("/v1/campaigns/{id}/inject_complete"), &req).await
    }

    pub async fn eject(&self, id: Uuid) -> Result<RoundCount, ClientError> {
        self.post(&format!("/v1/campaigns/{id}/eject"), &()).await
    }

    pub async fn rounds(&self, id: Uuid) -> Result<Preparation, ClientError> {
        Self::decode(self.http.get(format!("{}/v1/campaigns/{id}/rounds", self.base)).send().await?).await
    }

    pub async fn run(&self, id: Uuid, dataset: &[Sample]) -> Result<CampaignResults, ClientError> {
        self.post(&format!("/v1/campaigns/{id}/run"), &RunRequest { dataset: dataset.to_vec() }).await
    }

    pub async fn delete(&self, id: Uuid) -> Result<(), ClientError> {
        let resp = self.http.delete(format!("{}/v1/campaigns/{id}", self.base)).send().await?;
        if resp.status().is_success() {
            Ok(())
        } else {
            let status = resp.status();
            Err(ClientError::Api { status, message: resp.text().await.unwrap_or_default() })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid fault model `{spec}`: {reason}")]
pub struct FaultSpecError {
    spec: String,
    reason: String,
}

/// Parses `name[:args]`, e.g. `dead_neuron`, `threshold:0.5`,
/// `saturated_synapse:-10`, `bitflip_synapse:7,6` or `bitflip_synapse:3@4`
/// (bit 3 of a 4-bit quantizer).
pub fn parse_fault_model(spec: &str) -> Result<FaultModel, FaultSpecError> {
    let err = |reason: &str| FaultSpecError { spec: spec.to_string(), reason: reason.to_string() };
    let (name, arg) = match spec.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (spec.trim(), None),
    };
    let number = || -> Result<f64, FaultSpecError> {
        arg.ok_or_else(|| err("missing numeric argument"))?.parse::<f64>().map_err(|_| err("argument is not a number"))
    };
    let no_arg = |m: FaultModel| if arg.is_some() { Err(err("takes no argument")) } else { Ok(m) };
    match name {
        "dead_neuron" => no_arg(FaultModel::DeadNeuron),
        "saturated_neuron" => no_arg(FaultModel::SaturatedNeuron),
        "dead_synapse" => no_arg(FaultModel::DeadSynapse),
        "stuck_at" => Ok(FaultModel::StuckAt { x: number()? }),
        "integration" => Ok(FaultModel::Integration { rho: number()? }),
        "refractory" => Ok(FaultModel::Refractory { rho: number()? }),
        "threshold" => Ok(FaultModel::Threshold { rho: number()? }),
        "perturbed_synapse" => Ok(FaultModel::PerturbedSynapse { rho: number()? }),
        "saturated_synapse" => Ok(FaultModel::SaturatedSynapse { value: if arg.is_some() { number()? } else { 10.0 } }),
        "bitflip_synapse" => {
            let arg = arg.ok_or_else(|| err("missing bit positions"))?;
            let (bits, width) = match arg.split_once('@') {
                Some((b, w)) => (b, w.parse::<u32>().map_err(|_| err("width is not an integer"))?),
                None => (arg, 8),
            };
            let bits = bits
                .split(',')
                .map(|b| b.trim().parse::<u32>().map_err(|_| err("bit positions must be integers")))
                .collect::<Result<Vec<_>, _>>()?;
            let model = FaultModel::BitflipSynapse { bits, width };
            model.validate().map_err(|e| err(&e.to_string()))?;
            Ok(model)
        }
        _ => Err(err("unknown model")),
    }
}

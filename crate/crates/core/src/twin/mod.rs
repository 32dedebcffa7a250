//! Digital network twin: a synchronized mirror of the physical caching
//! network, a one-step request forecaster, scenario generation and one-step
//! overload verdicts.

mod forecast;
mod scenario;
mod state;

pub use forecast::{forecast_next, train_forecaster, Forecaster, ForecasterConfig, TrainReport};
pub use scenario::{export_scenarios, generate_scenarios, Scenario, ScenarioConfig, ScenarioLabel};
pub use state::{risk_verdict, sync, DigitalTwin, RiskReason, TwinState, Verdict};

//! Token usage records and API cost arithmetic.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_PRICES: &str = include_str!("../../data/prices.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub model_name: String,
}

impl UsageRecord {
    pub fn new(input_tokens: u64, output_tokens: u64, model_name: &str) -> Self {
        Self {
            input_tokens,
            output_tokens,
            model_name: model_name.to_owned(),
        }
    }
}

/// Unit prices in currency per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPrice {
    pub input_per_million: f64,
    pub output_per_million: f64,
}

impl ModelPrice {
    pub fn cost(&self, input_tokens: u64, output_tokens: u64) -> f64 {
        (input_tokens as f64 * self.input_per_million + output_tokens as f64 * self.output_per_million)
            / 1_000_000.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceTable {
    pub models: BTreeMap<String, ModelPrice>,
}

impl Default for PriceTable {
    fn default() -> Self {
        Self::from_toml(DEFAULT_PRICES).expect("bundled price table is valid")
    }
}

impl PriceTable {
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: PriceTable =
            toml::from_str(text).map_err(|e| Error::Config(format!("price table: {e}")))?;
        for (model, price) in &table.models {
            if !(price.input_per_million >= 0.0 && price.output_per_million >= 0.0) {
                return Err(Error::Config(format!("negative price for model `{model}`")));
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::parse(path, e))
    }

    pub fn get(&self, model: &str) -> Result<&ModelPrice> {
        self.models
            .get(model)
            .ok_or_else(|| Error::UnknownModel(model.to_owned()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelCost {
    pub calls: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub per_model: BTreeMap<String, ModelCost>,
    pub llm_calls: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub total_cost: f64,
}

/// Sums token counts per model and prices them.
pub fn accumulate_cost(ledger: &[UsageRecord], prices: &PriceTable) -> Result<CostSummary> {
    let mut per_model: BTreeMap<String, ModelCost> = BTreeMap::new();
    for record in ledger {
        let entry = per_model.entry(record.model_name.clone()).or_default();
        entry.calls += 1;
        entry.input_tokens += record.input_tokens;
        entry.output_tokens += record.output_tokens;
    }
    let mut summary = CostSummary {
        llm_calls: ledger.len(),
        ..Default::default()
    };
    for (model, entry) in per_model.iter_mut() {
        entry.cost = prices.get(model)?.cost(entry.input_tokens, entry.output_tokens);
        summary.input_tokens += entry.input_tokens;
        summary.output_tokens += entry.output_tokens;
        summary.total_cost += entry.cost;
    }
    summary.per_model = per_model;
    Ok(summary)
}

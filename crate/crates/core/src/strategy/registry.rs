use serde::{Deserialize, Serialize};

use super::baselines::{BaselineConfig, Ewc, Joint, Lwf, Naive, Replay};
use super::dwgrnet::{DwgrConfig, DwgrNet};
use super::hatcir::{HatCir, HatCirConfig};
use super::horde::{Horde, HordeConfig};
use super::{Strategy, StrategyContext};
use crate::error::{Error, Result};

/// Fixed registry names. Parameterized forms `er:<capacity>`,
/// `ewc:<lambda>` and `lwf:<alpha>:<temperature>` are accepted as well.
pub const STRATEGY_IDS: &[&str] = &[
    "naive", "er200", "er2000", "ewc", "lwf", "joint", "hatcir", "horde", "dwgrnet",
];

/// Per-strategy settings as they appear in an experiment config.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfigs {
    pub hatcir: HatCirConfig,
    pub horde: HordeConfig,
    pub dwgrnet: DwgrConfig,
    pub baselines: BaselineConfig,
}

fn number<T: std::str::FromStr>(id: &str, text: &str) -> Result<T> {
    text.parse()
        .map_err(|_| Error::config(format!("strategy `{id}`: cannot parse `{text}`")))
}

pub fn build_strategy(
    id: &str,
    ctx: StrategyContext,
    cfg: &StrategyConfigs,
) -> Result<Box<dyn Strategy>> {
    ctx.train.validate()?;
    let b = &cfg.baselines;
    let parts: Vec<&str> = id.split(':').collect();
    let s: Box<dyn Strategy> = match parts.as_slice() {
        ["naive"] => Box::new(Naive::new(ctx)?),
        ["joint"] => Box::new(Joint::new(ctx)?),
        ["er200"] => Box::new(Replay::new(ctx, 200)?),
        ["er2000"] => Box::new(Replay::new(ctx, 2000)?),
        ["er", cap] => Box::new(Replay::new(ctx, number(id, cap)?)?),
        ["ewc"] => Box::new(Ewc::new(ctx, b.ewc_lambda)?),
        ["ewc", lambda] => Box::new(Ewc::new(ctx, number(id, lambda)?)?),
        ["lwf"] => Box::new(Lwf::new(ctx, b.lwf_alpha, b.lwf_temperature)?),
        ["lwf", alpha, t] => Box::new(Lwf::new(ctx, number(id, alpha)?, number(id, t)?)?),
        ["hatcir"] => Box::new(HatCir::new(ctx, cfg.hatcir.clone())?),
        ["horde"] => Box::new(Horde::new(ctx, cfg.horde.clone())?),
        ["dwgrnet"] => Box::new(DwgrNet::new(ctx, cfg.dwgrnet.clone())?),
        _ => return Err(Error::config(format!("unknown strategy `{id}`"))),
    };
    Ok(s)
}

//! Drives an engine from a scripted scenario.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{AuditSink, Command, CommandKind, Engine, EngineContext, ExportSink};
use crate::clock::Timestamp;
use crate::domain::{BotId, TokenRef};
use crate::gateway::{
    run_scenario, ChatEvent, GuildSpec, ScenarioError, ScenarioHookup, SimPlatform, SimReport,
    SimScenario,
};

impl EngineContext {
    /// Context for a bot attached to a simulated guild.
    pub fn simulated(bot_id: &BotId, guild: &GuildSpec) -> Self {
        Self {
            server_url: format!("sim://{}", guild.guild_id),
            api_token_ref: TokenRef::for_bot(bot_id),
            guild_id: guild.guild_id.clone(),
            default_channels: guild
                .channels
                .first()
                .map(|c| ("announcements".to_owned(), c.clone()))
                .into_iter()
                .collect::<BTreeMap<_, _>>(),
            runtime_flags: BTreeMap::new(),
            admin_role_id: guild.admin_role_id.clone(),
        }
    }
}

/// Connects a scenario run to an engine: ticks sweep, events and commands
/// go straight in.
pub struct EngineHookup<'a> {
    pub engine: &'a mut Engine,
}

impl ScenarioHookup for EngineHookup<'_> {
    fn tick(&mut self, now: Timestamp) {
        self.engine.survey_timeout_sweep(now);
    }

    fn event(&mut self, event: &ChatEvent) {
        self.engine.on_event(event);
    }

    fn command(&mut self, at: Timestamp, actor: &str, command: &CommandKind) -> Result<(), String> {
        self.engine
            .execute(&Command::new(actor, command.clone()), at)
            .map(|_| ())
            .map_err(|e| e.to_string())
    }
}

/// Outcome of [`replay`].
pub struct Replay {
    pub platform: Arc<SimPlatform>,
    pub engine: Engine,
    pub report: SimReport,
}

/// Builds a fresh platform and engine for `scenario` and plays it to the end.
pub fn replay(
    scenario: &SimScenario,
    audit: Arc<dyn AuditSink>,
    exports: Arc<dyn ExportSink>,
) -> Result<Replay, ScenarioError> {
    scenario.validate()?;
    let platform = Arc::new(scenario.platform()?);
    let mut engine = Engine::new(
        scenario.bot_id.clone(),
        EngineContext::simulated(&scenario.bot_id, &scenario.guild),
        scenario.guild.groups.clone(),
        platform.clone(),
        audit,
        exports,
    )
    .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    let report = run_scenario(scenario, &platform, &mut EngineHookup { engine: &mut engine })?;
    Ok(Replay {
        platform,
        engine,
        report,
    })
}

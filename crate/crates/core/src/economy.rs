//! The artificial economy: a fixed population of immortal agents, each owning
//! one transformation rule, trading over a completely connected market at a
//! single fixed price.
//!
//! One step activates every agent once, in a fresh uniformly random order. An
//! activated agent that holds none of its rule's input draws a uniformly
//! random other agent as candidate seller. The trade executes iff the
//! candidate holds at least one unit of that input and the buyer's wealth is
//! strictly greater than the price. The buyer pays the seller, then converts
//! the unit into its rule's output at no cost. GDP for the step is the sum of
//! executed transaction prices.
//!
//! Money and units only move between agents, so total wealth and the total
//! unit count are constant for the whole run.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::network::{TransformationNetwork, TransformationRule};

/// Integer money units.
pub type Money = u64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EconomyError {
    #[error("the network has no edges, so no agent can be given a technology")]
    NoTechnology,
    #[error("invalid economy parameters: {0}")]
    InvalidParams(String),
    #[error("agent {agent}: {message}")]
    InvalidAgent { agent: usize, message: String },
}

/// What each agent holds before the first step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum EndowmentPolicy {
    /// One unit of the agent's rule output.
    #[default]
    OwnOutput,
    /// One unit of the agent's rule input.
    OwnInput,
    /// Nothing.
    None,
}

impl FromStr for EndowmentPolicy {
    type Err = EconomyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "own-output" => Ok(Self::OwnOutput),
            "own-input" => Ok(Self::OwnInput),
            "none" => Ok(Self::None),
            other => Err(EconomyError::InvalidParams(format!(
                "unknown endowment `{other}` (expected own-output, own-input or none)"
            ))),
        }
    }
}

impl fmt::Display for EndowmentPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::OwnOutput => "own-output",
            Self::OwnInput => "own-input",
            Self::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EconomyParams {
    pub population: usize,
    /// Identical for every resource and fixed for the run.
    pub price: Money,
    pub initial_wealth: Money,
    pub endowment: EndowmentPolicy,
    pub steps: usize,
    /// Leading steps excluded from the GDP summary.
    pub burn_in: usize,
    /// Candidate sellers a buyer may draw per activation; it stops at the
    /// first executed trade.
    pub seller_attempts: usize,
}

impl Default for EconomyParams {
    fn default() -> Self {
        Self {
            population: 50,
            price: 1,
            initial_wealth: 10,
            endowment: EndowmentPolicy::OwnOutput,
            steps: 1000,
            burn_in: 10,
            seller_attempts: 1,
        }
    }
}

impl EconomyParams {
    pub fn validate(&self) -> Result<(), EconomyError> {
        let fail = |msg: &str| Err(EconomyError::InvalidParams(msg.into()));
        if self.population == 0 {
            return fail("population must be positive");
        }
        if self.population > u32::MAX as usize {
            return fail("population does not fit 32-bit agent ids");
        }
        if self.price == 0 {
            return fail("price must be positive");
        }
        if self.burn_in >= self.steps {
            return fail("burn_in must be smaller than steps");
        }
        if self.seller_attempts == 0 {
            return fail("seller_attempts must be at least 1");
        }
        Ok(())
    }

    /// Number of steps in the GDP summary window.
    pub fn window(&self) -> usize {
        self.steps.saturating_sub(self.burn_in)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Agent {
    pub id: usize,
    pub rule: TransformationRule,
    pub wealth: Money,
}

/// Counts from one call to [`EconomyState::step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepReport {
    pub trades: u64,
    pub gdp: Money,
}

#[derive(Debug, Clone)]
pub struct EconomyState {
    agents: Vec<Agent>,
    // Row-major: agent `a` holds `inventory[a * resource_count + r]` units of
    // resource `r`.
    inventory: Vec<u32>,
    resource_count: usize,
    step_index: usize,
    rng: ChaCha8Rng,
    order: Vec<u32>,
}

/// Draws each agent's rule uniformly from the network's edges and applies the
/// endowment policy. Deterministic in `seed`.
pub fn init_economy(
    net: &TransformationNetwork,
    params: &EconomyParams,
    seed: u64,
) -> Result<EconomyState, EconomyError> {
    params.validate()?;
    let rules = net.edges();
    if rules.is_empty() {
        return Err(EconomyError::NoTechnology);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = net.node_count();
    let mut agents = Vec::with_capacity(params.population);
    let mut inventory = vec![0u32; params.population * n];
    for id in 0..params.population {
        let rule = rules[rng.gen_range(0..rules.len())];
        match params.endowment {
            EndowmentPolicy::OwnOutput => inventory[id * n + rule.output.0] = 1,
            EndowmentPolicy::OwnInput => inventory[id * n + rule.input.0] = 1,
            EndowmentPolicy::None => {}
        }
        agents.push(Agent {
            id,
            rule,
            wealth: params.initial_wealth,
        });
    }
    Ok(EconomyState::assemble(agents, inventory, n, rng))
}

impl EconomyState {
    /// Builds a state from explicit agents and per-agent inventories, for
    /// hand-constructed scenarios. Agent ids are reassigned to list order.
    pub fn from_parts(
        resource_count: usize,
        agents: Vec<(TransformationRule, Money, Vec<u32>)>,
        seed: u64,
    ) -> Result<Self, EconomyError> {
        let mut flat = Vec::with_capacity(agents.len() * resource_count);
        let mut list = Vec::with_capacity(agents.len());
        for (id, (rule, wealth, held)) in agents.into_iter().enumerate() {
            let invalid = |message: String| EconomyError::InvalidAgent { agent: id, message };
            if rule.input.0 >= resource_count || rule.output.0 >= resource_count {
                return Err(invalid(format!("rule {rule} outside {resource_count} resources")));
            }
            if held.len() != resource_count {
                return Err(invalid(format!(
                    "inventory has {} entries, expected {resource_count}",
                    held.len()
                )));
            }
            flat.extend(held);
            list.push(Agent { id, rule, wealth });
        }
        Ok(Self::assemble(list, flat, resource_count, ChaCha8Rng::seed_from_u64(seed)))
    }

    fn assemble(agents: Vec<Agent>, inventory: Vec<u32>, resource_count: usize, rng: ChaCha8Rng) -> Self {
        let order = (0..agents.len() as u32).collect();
        Self {
            agents,
            inventory,
            resource_count,
            step_index: 0,
            rng,
            order,
        }
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn inventory(&self, agent: usize) -> &[u32] {
        let start = agent * self.resource_count;
        &self.inventory[start..start + self.resource_count]
    }

    pub fn resource_count(&self) -> usize {
        self.resource_count
    }

    /// Steps completed so far.
    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn total_wealth(&self) -> u128 {
        self.agents.iter().map(|a| a.wealth as u128).sum()
    }

    pub fn total_units(&self) -> u64 {
        self.inventory.iter().map(|&u| u as u64).sum()
    }

    /// Units of each resource held across the population.
    pub fn units_by_resource(&self) -> Vec<u64> {
        let mut totals = vec![0u64; self.resource_count];
        for held in self.inventory.chunks_exact(self.resource_count) {
            for (total, &units) in totals.iter_mut().zip(held) {
                *total += units as u64;
            }
        }
        totals
    }

    /// Executes one full step of the trade protocol.
    pub fn step(&mut self, params: &EconomyParams) -> StepReport {
        let population = self.agents.len();
        let n = self.resource_count;
        let price = params.price;
        let mut report = StepReport::default();
        self.order.shuffle(&mut self.rng);
        if population < 2 {
            self.step_index += 1;
            return report;
        }
        for slot in 0..population {
            let buyer = self.order[slot] as usize;
            let rule = self.agents[buyer].rule;
            let want = rule.input.0;
            if self.inventory[buyer * n + want] != 0 {
                continue;
            }
            for _ in 0..params.seller_attempts {
                let mut seller = self.rng.gen_range(0..population - 1);
                if seller >= buyer {
                    seller += 1;
                }
                if self.inventory[seller * n + want] == 0 || self.agents[buyer].wealth <= price {
                    continue;
                }
                self.inventory[seller * n + want] -= 1;
                self.agents[buyer].wealth -= price;
                self.agents[seller].wealth += price;
                self.inventory[buyer * n + rule.output.0] += 1;
                report.trades += 1;
                report.gdp += price;
                break;
            }
        }
        self.step_index += 1;
        report
    }
}

/// GDP of each completed step.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GdpLedger {
    pub per_step_gdp: Vec<Money>,
}

impl GdpLedger {
    pub fn total(&self) -> u128 {
        self.per_step_gdp.iter().map(|&g| g as u128).sum()
    }

    /// GDP summed over the steps after the first `burn_in`.
    pub fn window_total(&self, burn_in: usize) -> Money {
        self.per_step_gdp.iter().skip(burn_in).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub ledger: GdpLedger,
    /// Steps in the summary window `(burn_in, steps]`.
    pub window: usize,
    /// Mean per-step GDP over the window.
    pub mean_step_gdp: f64,
    /// GDP summed over the window.
    pub total_gdp: Money,
}

/// Initializes an economy and runs it for `params.steps` steps.
pub fn run(
    net: &TransformationNetwork,
    params: &EconomyParams,
    seed: u64,
) -> Result<RunResult, EconomyError> {
    let mut state = init_economy(net, params, seed)?;
    let per_step_gdp = (0..params.steps).map(|_| state.step(params).gdp).collect();
    let ledger = GdpLedger { per_step_gdp };
    let total_gdp = ledger.window_total(params.burn_in);
    let window = params.window();
    Ok(RunResult {
        ledger,
        window,
        mean_step_gdp: total_gdp as f64 / window as f64,
        total_gdp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ConfigSpace, Directedness};
    use proptest::prelude::*;

    fn chain() -> TransformationNetwork {
        TransformationNetwork::new(4, [(0, 1), (1, 2), (2, 3)], Directedness::Directed).unwrap()
    }

    fn rule(i: usize, o: usize) -> TransformationRule {
        TransformationRule::new(i, o).unwrap()
    }

    #[test]
    fn empty_network_has_no_technology() {
        let net = TransformationNetwork::new(4, [], Directedness::Directed).unwrap();
        assert_eq!(
            init_economy(&net, &EconomyParams::default(), 1).unwrap_err(),
            EconomyError::NoTechnology
        );
    }

    #[test]
    fn params_are_validated() {
        let bad = [
            EconomyParams { population: 0, ..Default::default() },
            EconomyParams { price: 0, ..Default::default() },
            EconomyParams { burn_in: 1000, ..Default::default() },
            EconomyParams { seller_attempts: 0, ..Default::default() },
        ];
        for params in bad {
            assert!(matches!(params.validate(), Err(EconomyError::InvalidParams(_))));
        }
        assert_eq!(EconomyParams::default().window(), 990);
    }

    #[test]
    fn endowment_policy_parses() {
        for policy in [EndowmentPolicy::OwnOutput, EndowmentPolicy::OwnInput, EndowmentPolicy::None] {
            assert_eq!(policy.to_string().parse::<EndowmentPolicy>().unwrap(), policy);
        }
        assert!("gift".parse::<EndowmentPolicy>().is_err());
    }

    #[test]
    fn single_edge_gives_everyone_that_rule() {
        let net = TransformationNetwork::new(4, [(2, 1)], Directedness::Directed).unwrap();
        let state = init_economy(&net, &EconomyParams { population: 17, ..Default::default() }, 9).unwrap();
        assert!(state.agents().iter().all(|a| a.rule == rule(2, 1)));
        assert!(state.agents().iter().all(|a| a.wealth == 10));
        assert!((0..17).all(|a| state.inventory(a) == [0, 1, 0, 0]));
    }

    #[test]
    fn endowment_policies_place_one_unit() {
        let net = chain();
        for (policy, units) in [
            (EndowmentPolicy::OwnOutput, 50),
            (EndowmentPolicy::OwnInput, 50),
            (EndowmentPolicy::None, 0),
        ] {
            let params = EconomyParams { endowment: policy, ..Default::default() };
            let state = init_economy(&net, &params, 3).unwrap();
            assert_eq!(state.total_units(), units);
            for agent in state.agents() {
                let held = state.inventory(agent.id);
                match policy {
                    EndowmentPolicy::OwnOutput => assert_eq!(held[agent.rule.output.0], 1),
                    EndowmentPolicy::OwnInput => assert_eq!(held[agent.rule.input.0], 1),
                    EndowmentPolicy::None => assert!(held.iter().all(|&u| u == 0)),
                }
            }
        }
    }

    #[test]
    fn rule_assignment_is_uniform_over_edges() {
        // Four edges, 50 agents: 12.5 agents per rule in expectation.
        let net = TransformationNetwork::new(4, [(0, 2), (1, 0), (2, 3), (3, 1)], Directedness::Directed)
            .unwrap();
        let params = EconomyParams::default();
        let trials = 2000;
        let mut counts = [0usize; 4];
        for seed in 0..trials {
            let state = init_economy(&net, &params, seed).unwrap();
            for agent in state.agents() {
                let k = net.edges().iter().position(|r| *r == agent.rule).unwrap();
                counts[k] += 1;
            }
        }
        for count in counts {
            let mean = count as f64 / trials as f64;
            // Binomial(50, 1/4) sd is ~3.06; sd of the mean over 2000 draws ~0.07.
            assert!((mean - 12.5).abs() < 0.35, "mean agents per rule {mean}");
        }
    }

    #[test]
    fn init_is_deterministic() {
        let net = TransformationNetwork::complete(4, Directedness::Directed).unwrap();
        let params = EconomyParams::default();
        let a = init_economy(&net, &params, 42).unwrap();
        let b = init_economy(&net, &params, 42).unwrap();
        assert_eq!(a.agents(), b.agents());
        assert_eq!(a.inventory, b.inventory);
    }

    #[test]
    fn single_feasible_trade() {
        let params = EconomyParams::default();
        let mut state = EconomyState::from_parts(
            2,
            vec![
                (rule(0, 1), 10, vec![0, 0]),
                // Holds its own input so never buys; holds one unit of 0 to sell.
                (rule(1, 0), 10, vec![1, 1]),
            ],
            5,
        )
        .unwrap();
        let report = state.step(&params);
        assert_eq!(report, StepReport { trades: 1, gdp: 1 });
        assert_eq!(state.agents()[0].wealth, 9);
        assert_eq!(state.agents()[1].wealth, 11);
        assert_eq!(state.inventory(0), [0, 1]);
        assert_eq!(state.inventory(1), [0, 1]);
    }

    #[test]
    fn no_trade_when_everyone_holds_input() {
        let net = TransformationNetwork::complete(4, Directedness::Directed).unwrap();
        let params = EconomyParams { endowment: EndowmentPolicy::OwnInput, ..Default::default() };
        let mut state = init_economy(&net, &params, 11).unwrap();
        let before: Vec<Money> = state.agents().iter().map(|a| a.wealth).collect();
        assert_eq!(state.step(&params), StepReport::default());
        let after: Vec<Money> = state.agents().iter().map(|a| a.wealth).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn no_trade_when_wealth_equals_price() {
        let params = EconomyParams { price: 3, ..Default::default() };
        let mut state = EconomyState::from_parts(
            2,
            vec![(rule(0, 1), 3, vec![0, 0]), (rule(1, 0), 10, vec![1, 1])],
            5,
        )
        .unwrap();
        for _ in 0..50 {
            assert_eq!(state.step(&params).trades, 0);
        }
        assert_eq!(state.agents()[0].wealth, 3);
    }

    #[test]
    fn from_parts_validates_agents() {
        let err = EconomyState::from_parts(2, vec![(rule(0, 2), 1, vec![0, 0])], 0).unwrap_err();
        assert!(matches!(err, EconomyError::InvalidAgent { agent: 0, .. }));
        let err = EconomyState::from_parts(2, vec![(rule(0, 1), 1, vec![0])], 0).unwrap_err();
        assert!(matches!(err, EconomyError::InvalidAgent { agent: 0, .. }));
    }

    #[test]
    fn chain_quiesces_with_units_on_the_sink() {
        let net = chain();
        let params = EconomyParams { steps: 5000, burn_in: 10, ..Default::default() };
        let mut state = init_economy(&net, &params, 77).unwrap();
        let gdp: Vec<Money> = (0..params.steps).map(|_| state.step(&params).gdp).collect();
        assert!(gdp[..100].iter().any(|&g| g > 0));
        assert!(gdp[4000..].iter().all(|&g| g == 0));
        // Every unit that could move has reached the sink: resource 0 is never
        // produced, and nobody is left holding 1 or 2 while a buyer can pay.
        let units = state.units_by_resource();
        assert_eq!(units[0], 0);
        assert_eq!(units.iter().sum::<u64>(), 50);
        for a in state.agents() {
            if a.wealth > params.price {
                assert_eq!(units[a.rule.input.0], 0, "agent {} could still buy", a.id);
            }
        }
    }

    #[test]
    fn run_summarizes_the_window() {
        let net = TransformationNetwork::complete(4, Directedness::Directed).unwrap();
        let params = EconomyParams::default();
        let result = run(&net, &params, 1).unwrap();
        assert_eq!(result.ledger.per_step_gdp.len(), 1000);
        assert_eq!(result.window, 990);
        let windowed: Money = result.ledger.per_step_gdp[10..].iter().sum();
        assert_eq!(result.total_gdp, windowed);
        assert_eq!(result.mean_step_gdp, windowed as f64 / 990.0);
        assert!(result.mean_step_gdp > 0.0);
        assert_eq!(run(&net, &params, 1).unwrap(), result);
    }

    #[test]
    fn run_with_no_feasible_trades_is_zero() {
        let net = TransformationNetwork::complete(4, Directedness::Directed).unwrap();
        let params = EconomyParams { endowment: EndowmentPolicy::OwnInput, ..Default::default() };
        let result = run(&net, &params, 4).unwrap();
        assert_eq!(result.mean_step_gdp, 0.0);
        assert_eq!(result.ledger.total(), 0);
    }

    #[test]
    fn lone_agent_never_trades() {
        let net = chain();
        let params = EconomyParams { population: 1, ..Default::default() };
        assert_eq!(run(&net, &params, 0).unwrap().ledger.total(), 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn step_conserves_money_and_units(
            mask in 1u64..4096,
            seed in any::<u64>(),
            population in 2usize..60,
            attempts in 1usize..4,
            wealth in 0u64..20,
        ) {
            let net = ConfigSpace::new(4, Directedness::Directed).unwrap()
                .to_network(crate::network::ConfigId(mask)).unwrap();
            let params = EconomyParams {
                population,
                initial_wealth: wealth,
                seller_attempts: attempts,
                ..Default::default()
            };
            let mut state = init_economy(&net, &params, seed).unwrap();
            let money = state.total_wealth();
            let units = state.total_units();
            for _ in 0..200 {
                let report = state.step(&params);
                prop_assert_eq!(report.gdp, report.trades * params.price);
                prop_assert_eq!(state.total_wealth(), money);
                prop_assert_eq!(state.total_units(), units);
            }
        }
    }
}

//! Search-space planning agent. One planning call sets a TODO list, then a
//! Thought-Action-Observation loop runs in-process tools until every
//! dimension has a proposed range or the step budget runs out; anything
//! left unproposed falls back to conservative default ranges.

use super::{AnalyticEvaluator, AnalyticOptions, CircuitEvaluator, Dim, ParameterSpace, Scale};
use crate::gateway::{
    truncate_context, ChatRequest, Entry, Gateway, GatewayError, Transcript, TruncationPolicy,
};
use crate::netlist::{DeviceKind, NetlistIR};
use crate::placement::derive_symmetry_pairs;
use std::collections::BTreeMap;

const AGENT_SYSTEM: &str = include_str!("prompts/agent_system.txt");
const AGENT_PLAN: &str = include_str!("prompts/agent_plan.txt");

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub model: String,
    pub case_tag: String,
    pub max_steps: usize,
    pub truncation: TruncationPolicy,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            model: "default".to_string(),
            case_tag: "case".to_string(),
            max_steps: 24,
            truncation: TruncationPolicy::default(),
        }
    }
}

#[derive(Debug)]
pub struct SearchPlan {
    pub space: ParameterSpace,
    pub transcript: Transcript,
    /// True when the step budget ran out before every dim had a range.
    pub exhausted: bool,
}

/// Default ranges per dimension kind, used both as the outer clamp for
/// agent proposals and as the fill for dims the agent never covered.
fn fallback_dim(name: &str, kind: DeviceKind, which: char) -> Dim {
    let (lo, hi, scale, unit) = match (kind, which) {
        (k, 'w') if k.is_mos() => (0.42e-6, 100e-6, Scale::Log, "m"),
        (k, 'l') if k.is_mos() => (0.15e-6, 4e-6, Scale::Log, "m"),
        (DeviceKind::Resistor, _) => (1e2, 1e6, Scale::Log, "ohm"),
        (DeviceKind::Capacitor, _) => (1e-14, 1e-11, Scale::Log, "F"),
        (DeviceKind::VSource, _) => (0.0, 1.8, Scale::Linear, "V"),
        _ => (1e-6, 1e-3, Scale::Log, ""),
    };
    Dim {
        name: name.to_string(),
        lo,
        hi,
        scale,
        unit: unit.to_string(),
    }
}

/// Enumerate the searchable dims of a netlist and the device ties implied
/// by its symmetry pairs: a pair's second member is sized by the first
/// member's dims so matched devices stay identical.
pub fn fallback_space(ir: &NetlistIR) -> ParameterSpace {
    let mut twin: BTreeMap<&str, &str> = BTreeMap::new();
    for (a, b) in derive_symmetry_pairs(ir) {
        let (a, b) = (
            ir.device(&a).map(|d| d.id.as_str()).unwrap_or_default(),
            ir.device(&b).map(|d| d.id.as_str()).unwrap_or_default(),
        );
        twin.insert(b, a);
    }
    let mut dims = Vec::new();
    let mut ties: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    for d in &ir.devices {
        if twin.contains_key(d.id.as_str()) {
            continue;
        }
        let params: &[char] = match d.kind {
            k if k.is_mos() => &['w', 'l'],
            DeviceKind::Resistor => &['r'],
            DeviceKind::Capacitor => &['c'],
            DeviceKind::VSource => &['v'],
            _ => &[],
        };
        for &p in params {
            let name = format!("{}.{}", d.id, p.to_ascii_uppercase());
            dims.push(fallback_dim(&name, d.kind, p));
            let mut targets = vec![(d.id.clone(), p.to_string())];
            if let Some((b, _)) = twin.iter().find(|(_, a)| **a == d.id) {
                targets.push((b.to_string(), p.to_string()));
            }
            ties.insert(name, targets);
        }
    }
    let mut space = ParameterSpace::new(dims);
    space.ties = ties;
    space
}

fn describe_topology(ir: &NetlistIR) -> String {
    let mut out = String::new();
    for d in &ir.devices {
        out.push_str(&format!(
            "{} {} ({})\n",
            d.id,
            d.kind.name(),
            d.ports.join(", ")
        ));
    }
    if !ir.rails.is_empty() {
        let rails: Vec<String> = ir
            .rails
            .iter()
            .map(|(net, kind)| format!("{net}={kind:?}"))
            .collect();
        out.push_str(&format!("rails: {}\n", rails.join(" ")));
    }
    let pairs = derive_symmetry_pairs(ir);
    if !pairs.is_empty() {
        let pairs: Vec<String> = pairs.iter().map(|(a, b)| format!("{a}/{b}")).collect();
        out.push_str(&format!("matched pairs: {}\n", pairs.join(" ")));
    }
    out
}

fn describe_dims(space: &ParameterSpace) -> String {
    space
        .dims
        .iter()
        .map(|d| {
            format!(
                "{}: [{:e}, {:e}] {} scale{}{}",
                d.name,
                d.lo,
                d.hi,
                match d.scale {
                    Scale::Log => "log",
                    Scale::Linear => "linear",
                },
                if d.unit.is_empty() { "" } else { " " },
                d.unit
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

enum Action {
    TopologyQuery,
    Probe(BTreeMap<String, f64>),
    Range(String, f64, f64),
    Finish,
}

fn parse_action(text: &str) -> Result<(Option<String>, Action), String> {
    let mut thought = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        let line = line.strip_prefix("Action:").unwrap_or(line).trim();
        let action = if line.starts_with("topology_query") {
            Some(Action::TopologyQuery)
        } else if let Some(args) = line.strip_prefix("operating_point_probe") {
            let x: BTreeMap<String, f64> = serde_json::from_str(args.trim().trim_matches(['(', ')']))
                .map_err(|e| format!("bad probe arguments: {e}"))?;
            Some(Action::Probe(x))
        } else if let Some(args) = line.strip_prefix("range_propose") {
            let wrapped = format!("[{}]", args.trim().trim_matches(['(', ')']));
            let (name, lo, hi): (String, f64, f64) = serde_json::from_str(&wrapped)
                .map_err(|e| format!("bad range arguments: {e}"))?;
            Some(Action::Range(name, lo, hi))
        } else if line.starts_with("finish") {
            Some(Action::Finish)
        } else {
            if let Some(t) = line.strip_prefix("Thought:") {
                thought.push(t.trim().to_string());
            }
            None
        };
        if let Some(a) = action {
            let thought = if thought.is_empty() {
                None
            } else {
                Some(thought.join(" "))
            };
            return Ok((thought, a));
        }
    }
    Err("no recognizable action line".to_string())
}

/// Run the planning agent. Gateway failures propagate; an exhausted step
/// budget does not, it just leaves `exhausted` set and the gaps filled
/// from the fallback table.
pub fn plan_search_space<G: Gateway>(
    ir: &NetlistIR,
    gateway: &G,
    cfg: &AgentConfig,
) -> Result<SearchPlan, GatewayError> {
    let defaults = fallback_space(ir);
    let probe_eval = AnalyticEvaluator::new(ir, &defaults, AnalyticOptions::default()).ok();
    let mut transcript = Transcript::default();
    let mut proposed: BTreeMap<String, (f64, f64)> = BTreeMap::new();

    let plan_req = ChatRequest::new(cfg.model.clone(), format!("size:plan:{}", cfg.case_tag))
        .system(AGENT_SYSTEM.trim_end())
        .user(
            AGENT_PLAN
                .trim_end()
                .replace("{topology}", describe_topology(ir).trim_end())
                .replace("{dims}", &describe_dims(&defaults)),
        );
    transcript.push(Entry::Plan(gateway.complete(&plan_req)?));

    let mut exhausted = true;
    for step in 0..cfg.max_steps {
        if proposed.len() == defaults.dims.len() {
            exhausted = false;
            break;
        }
        let req = ChatRequest::new(
            cfg.model.clone(),
            format!("size:step:{step:02}:{}", cfg.case_tag),
        )
        .system(AGENT_SYSTEM.trim_end())
        .user(format!(
            "{}\n\nReply with your next Thought and Action.",
            crate::gateway::render_transcript(&transcript)
        ));
        let response = gateway.complete(&req)?;

        let observation = match parse_action(&response) {
            Err(e) => {
                transcript.push(Entry::Action(response.trim().to_string()));
                format!("{e}; use topology_query(), operating_point_probe({{...}}), range_propose(\"dim\", lo, hi) or finish()")
            }
            Ok((thought, action)) => {
                if let Some(t) = thought {
                    transcript.push(Entry::Thought(t));
                }
                match action {
                    Action::Finish => {
                        transcript.push(Entry::Action("finish()".to_string()));
                        exhausted = false;
                        break;
                    }
                    Action::TopologyQuery => {
                        transcript.push(Entry::Action("topology_query()".to_string()));
                        describe_topology(ir)
                    }
                    Action::Probe(x) => {
                        transcript.push(Entry::Action(format!(
                            "operating_point_probe({})",
                            serde_json::to_string(&x).unwrap_or_default()
                        )));
                        match &probe_eval {
                            None => "probe unavailable: topology not recognized by the analytic model".to_string(),
                            Some(ev) => {
                                // Missing dims probe at the geometric middle
                                // of their default range.
                                let mut full = x.clone();
                                for d in &defaults.dims {
                                    full.entry(d.name.clone()).or_insert_with(|| {
                                        let (lo, hi) = d.scale_bounds();
                                        d.from_scale(0.5 * (lo + hi))
                                    });
                                }
                                let mut metrics = BTreeMap::new();
                                match ev.run_stage(&full, 0, &mut metrics) {
                                    Ok(()) => serde_json::to_string(&metrics).unwrap_or_default(),
                                    Err(e) => format!("probe failed: {e}"),
                                }
                            }
                        }
                    }
                    Action::Range(name, lo, hi) => {
                        transcript.push(Entry::Action(format!(
                            "range_propose(\"{name}\", {lo:e}, {hi:e})"
                        )));
                        match defaults.dims.iter().find(|d| d.name == name) {
                            None => format!("unknown dimension {name}"),
                            Some(d) => {
                                let lo = lo.max(d.lo);
                                let hi = hi.min(d.hi);
                                if lo < hi {
                                    proposed.insert(name.clone(), (lo, hi));
                                    format!("recorded {name} in [{lo:e}, {hi:e}]")
                                } else {
                                    format!(
                                        "rejected {name}: empty range after clamping to [{:e}, {:e}]",
                                        d.lo, d.hi
                                    )
                                }
                            }
                        }
                    }
                }
            }
        };
        transcript.push(Entry::ToolResult(observation));
        transcript = truncate_context(&transcript, &cfg.truncation);
    }
    if proposed.len() == defaults.dims.len() {
        exhausted = false;
    }

    let mut space = defaults.clone();
    for d in &mut space.dims {
        if let Some((lo, hi)) = proposed.get(&d.name) {
            d.lo = *lo;
            d.hi = *hi;
        }
    }
    space.provenance = Some(format!("agent:{}", cfg.case_tag));
    Ok(SearchPlan {
        space,
        transcript,
        exhausted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedGateway;
    use crate::netlist::parse_spice;

    const FIVE_T: &str = "\
M1 d1 vin_p tail gnd nfet
M2 vout vin_n tail gnd nfet
M3 d1 d1 vdd vdd pfet
M4 vout d1 vdd vdd pfet
M5 tail vbias gnd gnd nfet
.end";

    #[test]
    fn fallback_space_ties_symmetric_pairs() {
        let ir = parse_spice(FIVE_T).unwrap().ir;
        let space = fallback_space(&ir);
        let names: Vec<&str> = space.dims.iter().map(|d| d.name.as_str()).collect();
        assert_eq!(names, ["M1.W", "M1.L", "M3.W", "M3.L", "M5.W", "M5.L"]);
        assert_eq!(
            space.ties["M1.W"],
            vec![("M1".to_string(), "w".to_string()), ("M2".to_string(), "w".to_string())]
        );
        assert_eq!(space.ties["M5.L"], vec![("M5".to_string(), "l".to_string())]);
    }

    #[test]
    fn scripted_run_collects_ranges_and_fills_the_rest() {
        let ir = parse_spice(FIVE_T).unwrap().ir;
        let gw = ScriptedGateway::new()
            .with("size:plan:", "TODO: inspect topology, probe, set ranges.")
            .with("size:step:", "Thought: look first.\nAction: topology_query()")
            .with(
                "size:step:",
                "Action: operating_point_probe({\"M5.W\": 2e-5, \"M5.L\": 5e-7})",
            )
            .with("size:step:", "Action: range_propose(\"M5.W\", 5e-6, 5e-5)")
            .with("size:step:", "Action: range_propose(\"M5.L\", 3e-7, 1e-6)")
            .with("size:step:", "Action: finish()");
        let plan = plan_search_space(&ir, &gw, &AgentConfig::default()).unwrap();
        assert!(!plan.exhausted);
        let w5 = plan.space.dims.iter().find(|d| d.name == "M5.W").unwrap();
        assert_eq!((w5.lo, w5.hi), (5e-6, 5e-5));
        let w1 = plan.space.dims.iter().find(|d| d.name == "M1.W").unwrap();
        assert_eq!((w1.lo, w1.hi), (0.42e-6, 100e-6), "unproposed dim keeps fallback");
    }

    #[test]
    fn transcript_keeps_one_tool_result_after_truncation() {
        let ir = parse_spice(FIVE_T).unwrap().ir;
        let gw = ScriptedGateway::new().with("size:plan:", "TODO.");
        for _ in 0..24 {
            gw.push("size:step:", "Action: topology_query()");
        }
        let plan = plan_search_space(&ir, &gw, &AgentConfig::default()).unwrap();
        assert!(plan.exhausted);
        let results = plan
            .transcript
            .entries
            .iter()
            .filter(|e| matches!(e, Entry::ToolResult(_)))
            .count();
        assert_eq!(results, 1);
    }

    #[test]
    fn prose_only_model_exhausts_into_fallbacks() {
        let ir = parse_spice(FIVE_T).unwrap().ir;
        let gw = ScriptedGateway::new().with("size:plan:", "TODO.");
        for _ in 0..24 {
            gw.push("size:step:", "I would rather chat about the weather.");
        }
        let plan = plan_search_space(&ir, &gw, &AgentConfig::default()).unwrap();
        assert!(plan.exhausted);
        for d in &plan.space.dims {
            let fallback = fallback_dim(&d.name, DeviceKind::Nmos, if d.name.ends_with('W') { 'w' } else { 'l' });
            assert_eq!((d.lo, d.hi), (fallback.lo, fallback.hi));
        }
    }

    #[test]
    fn out_of_bounds_proposals_are_clamped() {
        let ir = parse_spice("M1 vout vin gnd gnd nfet\nR1 vdd vout 10k\n.end").unwrap().ir;
        let gw = ScriptedGateway::new()
            .with("size:plan:", "TODO.")
            .with("size:step:", "Action: range_propose(\"M1.W\", 1e-9, 1e-3)")
            .with("size:step:", "Action: finish()");
        let plan = plan_search_space(&ir, &gw, &AgentConfig::default()).unwrap();
        let w = plan.space.dims.iter().find(|d| d.name == "M1.W").unwrap();
        assert_eq!((w.lo, w.hi), (0.42e-6, 100e-6));
    }
}

//! Multi-branch netlist extraction.
//!
//! Three prompt branches look at different evidence: the raw scan, the
//! color-annotated connectivity overlay, and both at once. Branches run
//! concurrently, each producing a netlist hypothesis; [`fuse`] reconciles
//! them by canonical-form vote, falling back to slot-level consensus and,
//! when enabled, a model pass that reasons about designer intent. Diverse
//! branches fail differently, which is the whole point: the chance that at
//! least one is right exceeds any single branch.

mod fuse;

pub use fuse::{fuse, FuseError, FuseMethod, FuseOutcome};

use crate::gateway::{ChatRequest, Content, Gateway};
use crate::netlist::{parse_spice, NetlistIR};
use crate::vision::Annotated;
use serde::{Deserialize, Serialize};

const SYSTEM_EXTRACT: &str = include_str!("prompts/system_extract.txt");
const STEPS_COT: &str = include_str!("prompts/steps_cot.txt");
const EXEMPLAR_USER: &str = include_str!("prompts/exemplar_user.txt");
const EXEMPLAR_ASSISTANT: &str = include_str!("prompts/exemplar_assistant.txt");
const USER_RAW: &str = include_str!("prompts/user_raw.txt");
const USER_ANNOTATED: &str = include_str!("prompts/user_annotated.txt");
const USER_DUAL: &str = include_str!("prompts/user_dual.txt");
pub(crate) const FUSE_INTENT: &str = include_str!("prompts/fuse_intent.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BranchKind {
    Raw,
    Annotated,
    Dual,
}

pub const BRANCHES: [BranchKind; 3] = [BranchKind::Raw, BranchKind::Annotated, BranchKind::Dual];

impl BranchKind {
    pub fn name(&self) -> &'static str {
        match self {
            BranchKind::Raw => "raw",
            BranchKind::Annotated => "annotated",
            BranchKind::Dual => "dual",
        }
    }

    /// Tie-break order: the overlay-grounded branch is trusted most, the
    /// unaided scan least.
    pub fn priority(&self) -> u8 {
        match self {
            BranchKind::Annotated => 0,
            BranchKind::Dual => 1,
            BranchKind::Raw => 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReasoningConfig {
    pub model: String,
    /// Distinguishes replay keys between cases and attempts.
    pub case_tag: String,
    /// Step-by-step instructions in the system prompt.
    pub cot: bool,
    /// One worked example ahead of the real query.
    pub micl: bool,
    /// Model-assisted fusion when branches disagree.
    pub intent_fusion: bool,
}

impl Default for ReasoningConfig {
    fn default() -> Self {
        ReasoningConfig {
            model: "default".to_string(),
            case_tag: "case".to_string(),
            cot: true,
            micl: true,
            intent_fusion: true,
        }
    }
}

/// Evidence shared by all branches of one extraction.
pub struct ExtractionInput<'a> {
    pub raw_png: &'a [u8],
    pub annotated: &'a Annotated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchHypothesis {
    pub kind: BranchKind,
    pub response: String,
    pub netlist: Option<NetlistIR>,
    /// Why `netlist` is absent, when it is.
    pub error: Option<String>,
}

/// The exact request a branch sends. Public because fixture recording must
/// build byte-identical requests.
pub fn branch_request(input: &ExtractionInput, kind: BranchKind, cfg: &ReasoningConfig) -> ChatRequest {
    let mut system = SYSTEM_EXTRACT.trim_end().to_string();
    if cfg.cot {
        system.push_str("\n\n");
        system.push_str(STEPS_COT.trim_end());
    }
    let mut req = ChatRequest::new(
        cfg.model.clone(),
        format!("extract:{}:{}", kind.name(), cfg.case_tag),
    )
    .system(system);
    if cfg.micl {
        req = req
            .user(EXEMPLAR_USER.trim_end())
            .assistant(EXEMPLAR_ASSISTANT.trim_end());
    }

    let node_map = serde_json::to_string_pretty(&input.annotated.node_map.regions)
        .expect("node map serializes");
    let detections = serde_json::to_string_pretty(&input.annotated.node_map.detections)
        .expect("detections serialize");
    let image = |data: &[u8]| Content::Image {
        media_type: "image/png".to_string(),
        data: data.to_vec(),
    };
    let parts = match kind {
        BranchKind::Raw => vec![Content::Text(USER_RAW.trim_end().to_string()), image(input.raw_png)],
        BranchKind::Annotated => vec![
            Content::Text(
                USER_ANNOTATED
                    .trim_end()
                    .replace("{node_map}", &node_map)
                    .replace("{detections}", &detections),
            ),
            image(&input.annotated.overlay_png),
        ],
        BranchKind::Dual => vec![
            Content::Text(USER_DUAL.trim_end().replace("{node_map}", &node_map)),
            image(input.raw_png),
            image(&input.annotated.overlay_png),
        ],
    };
    req.user_parts(parts)
}

/// Run one branch: complete the chat, pull the fenced deck, parse and
/// validate it. Model mistakes land in `error`, never in a panic.
pub fn run_branch<G: Gateway>(
    gateway: &G,
    input: &ExtractionInput,
    kind: BranchKind,
    cfg: &ReasoningConfig,
) -> Result<BranchHypothesis, crate::gateway::GatewayError> {
    let response = gateway.complete(&branch_request(input, kind, cfg))?;
    let (netlist, error) = match extract_spice_block(&response) {
        None => (None, Some("no fenced spice block".to_string())),
        Some(deck) => match parse_spice(&deck) {
            Err(e) => (None, Some(e.to_string())),
            Ok(parsed) if parsed.ir.devices.is_empty() => {
                (None, Some("deck has no devices".to_string()))
            }
            Ok(parsed) => (Some(parsed.ir), None),
        },
    };
    Ok(BranchHypothesis {
        kind,
        response,
        netlist,
        error,
    })
}

/// Run all branches concurrently and return them in [`BRANCHES`] order.
/// Joining in fixed order keeps the result deterministic regardless of
/// scheduling.
pub fn run_branches<G: Gateway + Sync>(
    gateway: &G,
    input: &ExtractionInput,
    cfg: &ReasoningConfig,
) -> Result<Vec<BranchHypothesis>, crate::gateway::GatewayError> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = BRANCHES
            .iter()
            .map(|kind| scope.spawn(move || run_branch(gateway, input, *kind, cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("branch thread completes"))
            .collect()
    })
}

/// Last fenced code block in the text, preferring blocks tagged `spice`.
pub fn extract_spice_block(text: &str) -> Option<String> {
    let mut tagged: Option<String> = None;
    let mut plain: Option<String> = None;
    let mut rest = text;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        let Some(end) = after.find("```") else { break };
        let block = &after[..end];
        let (header, body) = match block.split_once('\n') {
            Some((h, b)) => (h.trim(), b),
            None => ("", block),
        };
        if header.eq_ignore_ascii_case("spice") {
            tagged = Some(body.to_string());
        } else if header.is_empty() {
            plain = Some(body.to_string());
        }
        rest = &after[end + 3..];
    }
    tagged.or(plain)
}

/// Probability that at least one of the branches succeeds, assuming their
/// failures are independent. Complementary branches, whose errors are
/// negatively correlated, do at least this well; identical branches do
/// worse. Inputs are clamped to [0, 1].
pub fn joint_pass_lower_bound(branch_pass: &[f64]) -> f64 {
    let miss: f64 = branch_pass
        .iter()
        .map(|p| 1.0 - p.clamp(0.0, 1.0))
        .product();
    1.0 - miss
}

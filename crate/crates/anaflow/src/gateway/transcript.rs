//! Agent transcript bookkeeping: structured entries, lossy truncation that
//! keeps what matters, and model-written context compression.

use super::{ChatRequest, Gateway, GatewayError};
use serde::{Deserialize, Serialize};
use std::fmt::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Entry {
    Plan(String),
    Todo(String),
    Thought(String),
    Action(String),
    ToolResult(String),
    Summary(String),
    /// Marker left where entries were dropped.
    Elided(usize),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub entries: Vec<Entry>,
}

impl Transcript {
    pub fn push(&mut self, entry: Entry) {
        self.entries.push(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TruncationPolicy {
    /// How many of the most recent Thought/Action entries survive.
    pub keep_recent: usize,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy { keep_recent: 8 }
    }
}

/// Drop stale reasoning while preserving commitments: every Plan, Todo and
/// Summary entry stays, the newest ToolResult stays, and only the last
/// `keep_recent` Thought/Action entries stay. Dropped runs leave an
/// [`Entry::Elided`] marker so the model can see history was cut.
/// Applying the same policy twice gives the same transcript.
pub fn truncate_context(transcript: &Transcript, policy: &TruncationPolicy) -> Transcript {
    let entries = &transcript.entries;
    let newest_result = entries
        .iter()
        .rposition(|e| matches!(e, Entry::ToolResult(_)));

    let mut thought_action_left = policy.keep_recent;
    let mut keep = vec![false; entries.len()];
    for (i, e) in entries.iter().enumerate().rev() {
        keep[i] = match e {
            Entry::Plan(_) | Entry::Todo(_) | Entry::Summary(_) | Entry::Elided(_) => true,
            Entry::ToolResult(_) => Some(i) == newest_result,
            Entry::Thought(_) | Entry::Action(_) => {
                if thought_action_left > 0 {
                    thought_action_left -= 1;
                    true
                } else {
                    false
                }
            }
        };
    }

    let mut out = Vec::new();
    let mut dropped = 0usize;
    for (i, e) in entries.iter().enumerate() {
        if keep[i] {
            if dropped > 0 {
                push_elided(&mut out, dropped);
                dropped = 0;
            }
            if let Entry::Elided(n) = e {
                push_elided(&mut out, *n);
            } else {
                out.push(e.clone());
            }
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        push_elided(&mut out, dropped);
    }
    Transcript { entries: out }
}

/// Merge adjacent markers so repeated truncation cannot grow the transcript.
fn push_elided(out: &mut Vec<Entry>, n: usize) {
    if let Some(Entry::Elided(prev)) = out.last_mut() {
        *prev += n;
    } else {
        out.push(Entry::Elided(n));
    }
}

pub fn render_transcript(transcript: &Transcript) -> String {
    let mut out = String::new();
    for e in &transcript.entries {
        let _ = match e {
            Entry::Plan(t) => writeln!(out, "Plan: {t}"),
            Entry::Todo(t) => writeln!(out, "Todo: {t}"),
            Entry::Thought(t) => writeln!(out, "Thought: {t}"),
            Entry::Action(t) => writeln!(out, "Action: {t}"),
            Entry::ToolResult(t) => writeln!(out, "Observation: {t}"),
            Entry::Summary(t) => writeln!(out, "Summary of earlier work: {t}"),
            Entry::Elided(n) => writeln!(out, "[{n} earlier entries elided]"),
        };
    }
    out
}

/// Replace everything but the tail with one model-written summary entry.
/// Transcripts shorter than `keep_tail` come back unchanged.
pub fn compress_context<G: Gateway>(
    gateway: &G,
    transcript: &Transcript,
    model: &str,
    tag: &str,
    keep_tail: usize,
) -> Result<Transcript, GatewayError> {
    if transcript.entries.len() <= keep_tail {
        return Ok(transcript.clone());
    }
    let split = transcript.entries.len() - keep_tail;
    let head = Transcript {
        entries: transcript.entries[..split].to_vec(),
    };
    let req = ChatRequest::new(model, tag)
        .system(
            "You compress working transcripts of a circuit design agent. \
             Preserve every numeric result, decision and constraint; drop \
             dead ends. Reply with the summary only.",
        )
        .user(format!(
            "Summarize this transcript in at most 10 short lines:\n\n{}",
            render_transcript(&head)
        ));
    let summary = gateway.complete(&req)?;
    let mut entries = vec![Entry::Summary(summary)];
    entries.extend_from_slice(&transcript.entries[split..]);
    Ok(Transcript { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn transcript() -> Transcript {
        Transcript {
            entries: vec![
                Entry::Plan("size the amplifier".into()),
                Entry::Thought("check topology".into()),
                Entry::Action("topology_query()".into()),
                Entry::ToolResult("5 devices".into()),
                Entry::Todo("propose ranges".into()),
                Entry::Thought("probe a point".into()),
                Entry::Action("operating_point_probe(...)".into()),
                Entry::ToolResult("gain 38dB".into()),
                Entry::Thought("ranges look fine".into()),
            ],
        }
    }

    #[test]
    fn keeps_plans_todos_newest_result_and_recent_thoughts() {
        let t = transcript();
        let out = truncate_context(&t, &TruncationPolicy { keep_recent: 3 });
        assert_eq!(
            out.entries,
            vec![
                Entry::Plan("size the amplifier".into()),
                Entry::Elided(3),
                Entry::Todo("propose ranges".into()),
                Entry::Thought("probe a point".into()),
                Entry::Action("operating_point_probe(...)".into()),
                Entry::ToolResult("gain 38dB".into()),
                Entry::Thought("ranges look fine".into()),
            ]
        );
    }

    #[test]
    fn truncation_is_idempotent() {
        let policy = TruncationPolicy { keep_recent: 3 };
        let once = truncate_context(&transcript(), &policy);
        let twice = truncate_context(&once, &policy);
        assert_eq!(once, twice);
    }

    #[test]
    fn short_transcripts_pass_through() {
        let t = Transcript {
            entries: vec![Entry::Thought("only one".into())],
        };
        let out = truncate_context(&t, &TruncationPolicy::default());
        assert_eq!(out, t);
    }

    #[test]
    fn compression_replaces_head_with_summary() {
        struct Canned;
        impl Gateway for Canned {
            fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
                assert_eq!(req.tag, "compress:test");
                Ok("did topology and one probe".to_string())
            }
        }
        let t = transcript();
        let out = compress_context(&Canned, &t, "m", "compress:test", 2).unwrap();
        assert_eq!(out.entries.len(), 3);
        assert_eq!(out.entries[0], Entry::Summary("did topology and one probe".into()));
        assert_eq!(out.entries[1..], t.entries[7..]);
    }

    #[test]
    fn render_is_line_oriented() {
        let text = render_transcript(&transcript());
        assert!(text.starts_with("Plan: size the amplifier\n"));
        assert!(text.contains("Observation: gain 38dB"));
    }
}

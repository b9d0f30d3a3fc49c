//! SPICE deck parser.
//!
//! Accepts the element cards M, Q, R, C, L, V, I and D plus the directives
//! `.model`, `.subckt`/`.ends`, `.control`/`.endc` and `.end`. Continuation
//! lines (`+`), `*` comment lines and inline `;` / ` $` comments follow
//! simulator conventions. Anything else is rejected loudly: extraction
//! output that drops to an unsupported construct should fail, not silently
//! lose devices.

use super::{Device, DeviceKind, NetlistError, NetlistIR, RailConfig, Subckt};
use crate::units::parse_si;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct Parsed {
    pub ir: NetlistIR,
    pub warnings: Vec<String>,
}

impl Parsed {
    pub fn into_ir(self) -> NetlistIR {
        self.ir
    }
}

pub fn parse_spice(text: &str) -> Result<Parsed, NetlistError> {
    parse_spice_with(text, &RailConfig::default())
}

pub fn parse_spice_with(text: &str, rails: &RailConfig) -> Result<Parsed, NetlistError> {
    let lines = logical_lines(text)?;
    let mut warnings = Vec::new();

    // Pass 1: extract directives so .model cards may follow their elements.
    let mut models: BTreeMap<String, String> = BTreeMap::new();
    let mut subckts: BTreeMap<String, Subckt> = BTreeMap::new();
    let mut element_lines: Vec<&LogicalLine> = Vec::new();
    let mut iter = lines.iter().peekable();
    while let Some(line) = iter.next() {
        let lower = line.text.to_ascii_lowercase();
        let mut tokens = lower.split_whitespace();
        let head = tokens.next().unwrap_or("");
        match head {
            ".end" => break,
            ".model" => {
                let name = tokens
                    .next()
                    .ok_or_else(|| syntax(line, "missing model name"))?;
                let mtype = tokens
                    .next()
                    .map(|t| t.trim_start_matches('(').to_string())
                    .ok_or_else(|| syntax(line, "missing model type"))?;
                models.insert(name.to_string(), mtype);
            }
            ".control" => {
                warnings.push(format!("line {}: .control block skipped", line.line_no));
                let mut closed = false;
                for inner in iter.by_ref() {
                    if inner.text.to_ascii_lowercase().starts_with(".endc") {
                        closed = true;
                        break;
                    }
                }
                if !closed {
                    return Err(syntax(line, "unterminated .control block"));
                }
            }
            ".subckt" => {
                let name = tokens
                    .next()
                    .ok_or_else(|| syntax(line, "missing subckt name"))?
                    .to_string();
                let ports: Vec<String> = tokens.map(normalize_net).collect();
                let mut body = Vec::new();
                let mut closed = false;
                for inner in iter.by_ref() {
                    let il = inner.text.to_ascii_lowercase();
                    if il.starts_with(".ends") {
                        closed = true;
                        break;
                    }
                    if il.starts_with(".subckt") {
                        return Err(syntax(inner, "nested .subckt is not supported"));
                    }
                    body.push(inner.text.clone());
                }
                if !closed {
                    return Err(syntax(line, "unterminated .subckt block"));
                }
                subckts.insert(name.clone(), Subckt { name, ports, body });
            }
            h if h.starts_with('.') => {
                return Err(syntax(line, &format!("unsupported directive {h}")));
            }
            _ => element_lines.push(line),
        }
    }

    // Pass 2: element cards.
    let mut devices = Vec::new();
    for line in element_lines {
        devices.push(parse_element(line, &models)?);
    }

    let mut ir = NetlistIR::from_devices(devices, rails);
    ir.subckts = subckts;
    ir.validate()?;
    Ok(Parsed { ir, warnings })
}

struct LogicalLine {
    line_no: usize,
    text: String,
}

fn syntax(line: &LogicalLine, message: &str) -> NetlistError {
    NetlistError::Syntax {
        line: line.line_no,
        message: message.to_string(),
    }
}

/// Fold continuations, drop comments, record 1-based source line numbers.
fn logical_lines(text: &str) -> Result<Vec<LogicalLine>, NetlistError> {
    let mut out: Vec<LogicalLine> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let stripped = strip_inline_comment(raw);
        let trimmed = stripped.trim();
        if trimmed.is_empty() || trimmed.starts_with('*') {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('+') {
            match out.last_mut() {
                Some(prev) => {
                    prev.text.push(' ');
                    prev.text.push_str(rest.trim());
                }
                None => {
                    return Err(NetlistError::Syntax {
                        line: line_no,
                        message: "continuation with no preceding card".to_string(),
                    })
                }
            }
        } else {
            out.push(LogicalLine {
                line_no,
                text: trimmed.to_string(),
            });
        }
    }
    Ok(out)
}

fn strip_inline_comment(raw: &str) -> &str {
    let mut cut = raw.len();
    if let Some(i) = raw.find(';') {
        cut = cut.min(i);
    }
    // `$` starts a comment only after whitespace, per ngspice.
    let bytes = raw.as_bytes();
    for (i, b) in bytes.iter().enumerate() {
        if *b == b'$' && i > 0 && bytes[i - 1].is_ascii_whitespace() {
            cut = cut.min(i);
            break;
        }
    }
    &raw[..cut]
}

fn normalize_net(net: &str) -> String {
    let n = net.to_ascii_lowercase();
    if n == "0" {
        "gnd".to_string()
    } else {
        n
    }
}

fn parse_element(line: &LogicalLine, models: &BTreeMap<String, String>) -> Result<Device, NetlistError> {
    let tokens: Vec<&str> = line.text.split_whitespace().collect();
    let id = tokens[0].to_ascii_uppercase();
    let letter = id.chars().next().unwrap_or(' ');
    match letter {
        'M' => {
            if tokens.len() < 6 {
                return Err(syntax(line, "MOSFET card needs 4 nets and a model"));
            }
            let ports: Vec<String> = tokens[1..5].iter().map(|t| normalize_net(t)).collect();
            let kind = mos_kind(tokens[5], models).map_err(|m| syntax(line, &m))?;
            let params = parse_params(line, &tokens[6..])?;
            Ok(Device { id, kind, ports, params })
        }
        'Q' => {
            if tokens.len() < 5 {
                return Err(syntax(line, "BJT card needs 3 nets and a model"));
            }
            let ports: Vec<String> = tokens[1..4].iter().map(|t| normalize_net(t)).collect();
            let kind = bjt_kind(tokens[4], models).map_err(|m| syntax(line, &m))?;
            let params = parse_params(line, &tokens[5..])?;
            Ok(Device { id, kind, ports, params })
        }
        'R' | 'C' | 'L' => {
            if tokens.len() < 4 {
                return Err(syntax(line, "two-terminal card needs 2 nets and a value"));
            }
            let kind = match letter {
                'R' => DeviceKind::Resistor,
                'C' => DeviceKind::Capacitor,
                _ => DeviceKind::Inductor,
            };
            let ports: Vec<String> = tokens[1..3].iter().map(|t| normalize_net(t)).collect();
            let key = letter.to_ascii_lowercase().to_string();
            let mut params;
            if tokens[3].contains('=') {
                params = parse_params(line, &tokens[3..])?;
                if !params.contains_key(&key) {
                    return Err(syntax(line, &format!("missing {key}= value")));
                }
            } else {
                let value = parse_si(tokens[3])
                    .ok_or_else(|| syntax(line, &format!("bad value {}", tokens[3])))?;
                params = parse_params(line, &tokens[4..])?;
                params.insert(key.clone(), value);
            }
            if params[&key] <= 0.0 {
                return Err(syntax(line, &format!("{key} must be positive")));
            }
            Ok(Device { id, kind, ports, params })
        }
        'V' | 'I' => {
            if tokens.len() < 3 {
                return Err(syntax(line, "source card needs 2 nets"));
            }
            let kind = if letter == 'V' { DeviceKind::VSource } else { DeviceKind::ISource };
            let ports: Vec<String> = tokens[1..3].iter().map(|t| normalize_net(t)).collect();
            let params = parse_source_params(line, &tokens[3..])?;
            Ok(Device { id, kind, ports, params })
        }
        'D' => {
            if tokens.len() < 4 {
                return Err(syntax(line, "diode card needs 2 nets and a model"));
            }
            let ports: Vec<String> = tokens[1..3].iter().map(|t| normalize_net(t)).collect();
            let params = parse_params(line, &tokens[4..])?;
            Ok(Device { id, kind: DeviceKind::Diode, ports, params })
        }
        other => Err(syntax(line, &format!("unsupported element letter {other}"))),
    }
}

fn parse_params(line: &LogicalLine, tokens: &[&str]) -> Result<BTreeMap<String, f64>, NetlistError> {
    let mut params = BTreeMap::new();
    for t in tokens {
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| syntax(line, &format!("expected name=value, got {t}")))?;
        let value =
            parse_si(v).ok_or_else(|| syntax(line, &format!("bad value {v} for {k}")))?;
        params.insert(k.to_ascii_lowercase(), value);
    }
    Ok(params)
}

/// Sources accept `DC <v>`, `AC <v>`, a bare value, or nothing (dc 0).
fn parse_source_params(line: &LogicalLine, tokens: &[&str]) -> Result<BTreeMap<String, f64>, NetlistError> {
    let mut params = BTreeMap::new();
    let mut i = 0;
    while i < tokens.len() {
        let t = tokens[i].to_ascii_lowercase();
        if t == "dc" || t == "ac" {
            let v = tokens
                .get(i + 1)
                .and_then(|v| parse_si(v))
                .ok_or_else(|| syntax(line, &format!("{t} needs a value")))?;
            params.insert(t, v);
            i += 2;
        } else if let Some((k, v)) = t.split_once('=') {
            let value =
                parse_si(v).ok_or_else(|| syntax(line, &format!("bad value {v} for {k}")))?;
            params.insert(k.to_string(), value);
            i += 1;
        } else if let Some(v) = parse_si(&t) {
            params.insert("dc".to_string(), v);
            i += 1;
        } else {
            return Err(syntax(line, &format!("unsupported source token {t}")));
        }
    }
    params.entry("dc".to_string()).or_insert(0.0);
    Ok(params)
}

fn mos_kind(model: &str, models: &BTreeMap<String, String>) -> Result<DeviceKind, String> {
    let m = model.to_ascii_lowercase();
    if let Some(t) = models.get(&m) {
        return match t.as_str() {
            "nmos" => Ok(DeviceKind::Nmos),
            "pmos" => Ok(DeviceKind::Pmos),
            other => Err(format!("model {model} has non-MOS type {other}")),
        };
    }
    if m.contains("pmos") || m.contains("pfet") {
        Ok(DeviceKind::Pmos)
    } else if m.contains("nmos") || m.contains("nfet") {
        Ok(DeviceKind::Nmos)
    } else if m.starts_with('p') {
        Ok(DeviceKind::Pmos)
    } else if m.starts_with('n') {
        Ok(DeviceKind::Nmos)
    } else {
        Err(format!("cannot infer MOS polarity from model {model}"))
    }
}

fn bjt_kind(model: &str, models: &BTreeMap<String, String>) -> Result<DeviceKind, String> {
    let m = model.to_ascii_lowercase();
    if let Some(t) = models.get(&m) {
        return match t.as_str() {
            "npn" => Ok(DeviceKind::Npn),
            "pnp" => Ok(DeviceKind::Pnp),
            other => Err(format!("model {model} has non-BJT type {other}")),
        };
    }
    if m.contains("pnp") || m.starts_with('p') {
        Ok(DeviceKind::Pnp)
    } else if m.contains("npn") || m.starts_with('n') {
        Ok(DeviceKind::Npn)
    } else {
        Err(format!("cannot infer BJT polarity from model {model}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::RailKind;

    #[test]
    fn parses_mos_card() {
        let ir = parse_spice("M1 out in 0 0 nfet W=1u L=0.15u\n.end").unwrap().ir;
        assert_eq!(ir.devices.len(), 1);
        let d = &ir.devices[0];
        assert_eq!(d.id, "M1");
        assert_eq!(d.kind, DeviceKind::Nmos);
        assert_eq!(d.ports, vec!["out", "in", "gnd", "gnd"]);
        assert_eq!(d.params["w"], 1e-6);
        assert_eq!(d.params["l"], 1.5e-7);
        let nets: Vec<&str> = ir.nets.iter().map(String::as_str).collect();
        assert_eq!(nets, vec!["gnd", "in", "out"]);
        assert_eq!(ir.rails["gnd"], RailKind::Gnd);
        assert_eq!(ir.rails["in"], RailKind::Input);
        assert_eq!(ir.rails["out"], RailKind::Output);
    }

    #[test]
    fn parses_resistor_value() {
        let ir = parse_spice("R1 a b 10k").unwrap().ir;
        assert_eq!(ir.devices[0].kind, DeviceKind::Resistor);
        assert_eq!(ir.devices[0].params["r"], 10000.0);
    }

    #[test]
    fn rejects_short_mos_card() {
        let err = parse_spice("M1 d g\n.end").unwrap_err();
        match err {
            NetlistError::Syntax { line, .. } => assert_eq!(line, 1),
            other => panic!("expected syntax error, got {other}"),
        }
    }

    #[test]
    fn folds_continuations_and_comments() {
        let text = "* amp\nM1 out in 0 0 nfet\n+ W=2u ; gate width\n+ L=1u $ length\n.end\n";
        let ir = parse_spice(text).unwrap().ir;
        assert_eq!(ir.devices[0].params["w"], 2e-6);
        assert_eq!(ir.devices[0].params["l"], 1e-6);
    }

    #[test]
    fn skips_control_block_with_warning() {
        let text = "R1 a b 1k\n.control\nrun\nprint all\n.endc\n.end";
        let parsed = parse_spice(text).unwrap();
        assert_eq!(parsed.ir.devices.len(), 1);
        assert_eq!(parsed.warnings.len(), 1);
        assert!(parsed.warnings[0].contains(".control"));
    }

    #[test]
    fn stores_subckt_without_flattening() {
        let text = ".subckt ota inp inn out\nM1 out inp tail 0 nfet\n.ends\nR1 a b 1k\n.end";
        let ir = parse_spice(text).unwrap().ir;
        assert_eq!(ir.devices.len(), 1);
        let sub = &ir.subckts["ota"];
        assert_eq!(sub.ports, vec!["inp", "inn", "out"]);
        assert_eq!(sub.body.len(), 1);
    }

    #[test]
    fn model_card_may_follow_element() {
        let text = "M1 d g s b mymod\n.model mymod pmos\n.end";
        let ir = parse_spice(text).unwrap().ir;
        assert_eq!(ir.devices[0].kind, DeviceKind::Pmos);
    }

    #[test]
    fn model_type_mismatch_is_rejected() {
        let text = "M1 d g s b bjtmod\n.model bjtmod npn\n.end";
        assert!(parse_spice(text).is_err());
    }

    #[test]
    fn rejects_unknown_directive() {
        assert!(parse_spice(".include lib.sp\nR1 a b 1k").is_err());
    }

    #[test]
    fn rejects_unsupported_element() {
        assert!(parse_spice("X1 a b ota").is_err());
    }

    #[test]
    fn rejects_negative_resistance() {
        assert!(parse_spice("R1 a b -5").is_err());
    }

    #[test]
    fn rejects_duplicate_ids() {
        assert!(parse_spice("R1 a b 1k\nr1 b c 2k").is_err());
    }

    #[test]
    fn source_forms() {
        let ir = parse_spice("V1 vdd 0 1.8\nV2 in 0 DC 0 AC 1\nI1 vdd x 10u\nR1 x in 1k\nR2 vdd x 1k")
            .unwrap()
            .ir;
        assert_eq!(ir.device("V1").unwrap().params["dc"], 1.8);
        let v2 = ir.device("V2").unwrap();
        assert_eq!(v2.params["dc"], 0.0);
        assert_eq!(v2.params["ac"], 1.0);
        assert_eq!(ir.device("I1").unwrap().params["dc"], 1e-5);
    }

    #[test]
    fn case_insensitive_nets_merge() {
        let ir = parse_spice("R1 OUT mid 1k\nR2 MID out 2k").unwrap().ir;
        assert_eq!(ir.nets.len(), 2);
    }
}

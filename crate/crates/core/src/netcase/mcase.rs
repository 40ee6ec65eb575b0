//! Reader for the subset of MATPOWER case files used here: `mpc.baseMVA`,
//! `mpc.bus`, `mpc.gen`, `mpc.branch` and `mpc.gencost`.

use super::types::*;
use super::CaseError;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct McaseOptions {
    /// Replace quadratic cost curves by their tangent at `p_max / 2`.
    pub quadratic_tangent: bool,
}

#[derive(Debug, Default)]
struct RawTables {
    base_mva: Option<(usize, f64)>,
    name: Option<String>,
    tables: BTreeMap<String, (usize, Vec<(usize, Vec<f64>)>)>,
}

fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '\'' => in_str = !in_str,
            '%' | '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_number(tok: &str, line: usize) -> Result<f64, CaseError> {
    let t = tok.trim();
    match t {
        "Inf" | "inf" | "+Inf" => Ok(f64::INFINITY),
        "-Inf" | "-inf" => Ok(f64::NEG_INFINITY),
        _ => t.parse::<f64>().map_err(|_| CaseError::Syntax {
            line,
            msg: format!("invalid number `{t}`"),
        }),
    }
}

fn split_row(text: &str, line: usize) -> Result<Vec<f64>, CaseError> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| parse_number(t, line))
        .collect()
}

fn tokenize(src: &str) -> Result<RawTables, CaseError> {
    let mut raw = RawTables::default();
    let mut current: Option<(String, usize, Vec<(usize, Vec<f64>)>)> = None;
    for (ln0, full) in src.lines().enumerate() {
        let ln = ln0 + 1;
        let line = strip_comment(full);
        if let Some((name, start, mut rows)) = current.take() {
            let (body, closed) = match line.find(']') {
                Some(p) => (&line[..p], true),
                None => (line, false),
            };
            for chunk in body.split(';') {
                let vals = split_row(chunk, ln)?;
                if !vals.is_empty() {
                    rows.push((ln, vals));
                }
            }
            if closed {
                raw.tables.insert(name, (start, rows));
            } else {
                current = Some((name, start, rows));
            }
            continue;
        }
        let trimmed = line.trim();
        if trimmed.starts_with("function") {
            if let Some(eq) = trimmed.find('=') {
                raw.name = Some(trimmed[eq + 1..].trim().trim_end_matches(';').to_string());
            }
            continue;
        }
        let Some(rest) = trimmed.strip_prefix("mpc.") else {
            continue;
        };
        let Some(eq) = rest.find('=') else {
            return Err(CaseError::Syntax {
                line: ln,
                msg: "expected `=` after field name".into(),
            });
        };
        let field = rest[..eq].trim().to_string();
        let rhs = rest[eq + 1..].trim();
        if let Some(after) = rhs.strip_prefix('[') {
            let (body, closed) = match after.find(']') {
                Some(p) => (&after[..p], true),
                None => (after, false),
            };
            let mut rows = Vec::new();
            for chunk in body.split(';') {
                let vals = split_row(chunk, ln)?;
                if !vals.is_empty() {
                    rows.push((ln, vals));
                }
            }
            if closed {
                raw.tables.insert(field, (ln, rows));
            } else {
                current = Some((field, ln, rows));
            }
        } else if field == "baseMVA" {
            let v = parse_number(rhs.trim_end_matches(';'), ln)?;
            raw.base_mva = Some((ln, v));
        }
    }
    if let Some((name, start, _)) = current {
        return Err(CaseError::Syntax {
            line: start,
            msg: format!("matrix `mpc.{name}` is not closed"),
        });
    }
    Ok(raw)
}

fn need_cols(rows: &[(usize, Vec<f64>)], n: usize, table: &str) -> Result<(), CaseError> {
    for (ln, r) in rows {
        if r.len() < n {
            return Err(CaseError::Syntax {
                line: *ln,
                msg: format!("`mpc.{table}` row needs at least {n} columns, found {}", r.len()),
            });
        }
    }
    Ok(())
}

fn theta_diff_limit(angmin: Option<f64>, angmax: Option<f64>) -> f64 {
    let usable = |v: f64| v != 0.0 && v.abs() < 360.0;
    match (angmin, angmax) {
        (Some(lo), Some(hi)) if usable(lo) && usable(hi) => lo.abs().min(hi.abs()).to_radians(),
        (_, Some(hi)) if usable(hi) => hi.abs().to_radians(),
        (Some(lo), _) if usable(lo) => lo.abs().to_radians(),
        _ => DEFAULT_THETA_DIFF,
    }
}

pub fn parse_mcase(src: &str, opts: &McaseOptions) -> Result<NetworkCase, CaseError> {
    let raw = tokenize(src)?;
    let (_, base_mva) = raw.base_mva.ok_or(CaseError::Syntax {
        line: 0,
        msg: "missing `mpc.baseMVA`".into(),
    })?;
    let table = |name: &str| -> Result<&Vec<(usize, Vec<f64>)>, CaseError> {
        raw.tables.get(name).map(|(_, rows)| rows).ok_or(CaseError::Syntax {
            line: 0,
            msg: format!("missing `mpc.{name}`"),
        })
    };
    let bus_rows = table("bus")?;
    let gen_rows = table("gen")?;
    let branch_rows = table("branch")?;
    let cost_rows = table("gencost")?;
    need_cols(bus_rows, 13, "bus")?;
    need_cols(gen_rows, 10, "gen")?;
    need_cols(branch_rows, 11, "branch")?;

    // generators in service, with their cost rows
    if cost_rows.len() < gen_rows.len() {
        return Err(CaseError::Syntax {
            line: raw.tables["gencost"].0,
            msg: format!("{} cost rows for {} generators", cost_rows.len(), gen_rows.len()),
        });
    }
    let mut generators = Vec::new();
    for ((ln, g), (cln, c)) in gen_rows.iter().zip(cost_rows) {
        if g[7] <= 0.0 {
            continue;
        }
        if c.len() < 4 {
            return Err(CaseError::Syntax {
                line: *cln,
                msg: "cost row too short".into(),
            });
        }
        if c[0] as i64 != 2 {
            return Err(CaseError::Unsupported {
                line: *cln,
                msg: "only polynomial (model 2) costs are supported".into(),
            });
        }
        let ncost = c[3] as usize;
        if c.len() < 4 + ncost {
            return Err(CaseError::Syntax {
                line: *cln,
                msg: format!("cost row declares {ncost} coefficients"),
            });
        }
        let coefs = &c[4..4 + ncost];
        let p_max_mw = g[8];
        let (c2, c1, c0) = match ncost {
            1 => (0.0, 0.0, coefs[0]),
            2 => (0.0, coefs[0], coefs[1]),
            3 => (coefs[0], coefs[1], coefs[2]),
            _ => {
                return Err(CaseError::Unsupported {
                    line: *cln,
                    msg: "cost polynomials above degree 2 are not supported".into(),
                })
            }
        };
        let (slope, offset) = if c2 != 0.0 {
            if !opts.quadratic_tangent {
                return Err(CaseError::Unsupported {
                    line: *cln,
                    msg: "quadratic cost; only linear costs are modelled (enable the tangent conversion)".into(),
                });
            }
            let p0 = p_max_mw / 2.0;
            (2.0 * c2 * p0 + c1, (c0 - c2 * p0 * p0).max(0.0))
        } else {
            (c1, c0)
        };
        let _ = ln;
        generators.push(Generator {
            bus: g[0] as usize,
            a: slope * base_mva,
            b: offset,
            p_min: g[9] / base_mva,
            p_max: p_max_mw / base_mva,
            q_min: g[4] / base_mva,
            q_max: g[3] / base_mva,
            ramp_limit: DEFAULT_RAMP_FRACTION * p_max_mw / base_mva,
            participation: 0.0,
        });
    }
    let rho = inverse_cost_participation(&generators);
    for (g, r) in generators.iter_mut().zip(rho) {
        g.participation = r;
    }

    let mut buses = Vec::new();
    let mut loads = Vec::new();
    let gen_bus_ids: std::collections::BTreeSet<usize> = generators.iter().map(|g| g.bus).collect();
    for (ln, b) in bus_rows {
        let id = b[0];
        if id < 0.0 || id.fract() != 0.0 {
            return Err(CaseError::Syntax {
                line: *ln,
                msg: format!("invalid bus id {id}"),
            });
        }
        let id = id as usize;
        let kind = b[1] as i64;
        if kind == 4 {
            continue;
        }
        let bus_type = if kind == 3 {
            BusType::Reference
        } else if gen_bus_ids.contains(&id) {
            BusType::Generator
        } else {
            BusType::LoadOnly
        };
        buses.push(Bus {
            id,
            bus_type,
            v_min: b[12],
            v_max: b[11],
            theta_min: -DEFAULT_THETA_BOUND,
            theta_max: DEFAULT_THETA_BOUND,
            g_shunt: b[4] / base_mva,
            b_shunt: b[5] / base_mva,
        });
        let (pd, qd) = (b[2] / base_mva, b[3] / base_mva);
        if pd != 0.0 || qd != 0.0 {
            loads.push(LoadPoint {
                bus: id,
                p_d: pd,
                q_d: qd,
                lr: if pd > 0.0 { qd / pd } else { 0.0 },
            });
        }
    }

    let mut branches = Vec::new();
    for (_, br) in branch_rows {
        if br[10] <= 0.0 {
            continue;
        }
        let rate = br[5];
        branches.push(Branch {
            from: br[0] as usize,
            to: br[1] as usize,
            r: br[2],
            x: br[3],
            b_sh: br[4],
            tap: if br[8] == 0.0 { 1.0 } else { br[8] },
            shift: br[9].to_radians(),
            p_max: if rate > 0.0 && rate.is_finite() { Some(rate / base_mva) } else { None },
            theta_diff_max: theta_diff_limit(br.get(11).copied(), br.get(12).copied()),
        });
    }

    NetworkCase {
        name: raw.name.unwrap_or_else(|| "case".to_string()),
        base_mva,
        buses,
        branches,
        generators,
        loads,
        res_units: Vec::new(),
    }
    .normalize()
}

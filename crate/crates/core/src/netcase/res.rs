use super::types::{NetworkCase, ResUnit};
use super::CaseError;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Apparent-power rating relative to nominal RES output.
pub const RES_RATING_FACTOR: f64 = 1.2;

/// Adds RES units so that their total nominal output equals
/// `penetration × Σ p_max` of the conventional generators.
///
/// Without a seed, load buses are filled in decreasing order of load (ties by
/// bus id), each up to its local demand; with a seed the bus order is a
/// seeded shuffle. Any remainder is spread over the load buses in proportion
/// to their demand. Each unit gets `s_max = RES_RATING_FACTOR × p_r`.
pub fn place_res(case: &NetworkCase, penetration: f64, seed: Option<u64>) -> Result<NetworkCase, CaseError> {
    if !(0.0..=1.0).contains(&penetration) {
        return Err(CaseError::Invariant {
            field: "penetration".into(),
            msg: "must lie in [0, 1]".into(),
        });
    }
    let mut out = case.clone();
    if penetration == 0.0 {
        return Ok(out);
    }
    // aggregate positive demand per bus
    let mut demand: Vec<(usize, f64)> = Vec::new();
    for l in &case.loads {
        if l.p_d <= 0.0 {
            continue;
        }
        match demand.iter_mut().find(|(b, _)| *b == l.bus) {
            Some(e) => e.1 += l.p_d,
            None => demand.push((l.bus, l.p_d)),
        }
    }
    if demand.is_empty() {
        return Err(CaseError::Invariant {
            field: "penetration".into(),
            msg: "no load bus can host RES".into(),
        });
    }
    match seed {
        None => demand.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))),
        Some(s) => {
            demand.sort_by_key(|d| d.0);
            demand.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
        }
    }
    let target = penetration * case.total_gen_capacity();
    let mut remaining = target;
    let mut alloc: Vec<(usize, f64)> = Vec::new();
    for &(bus, pd) in &demand {
        if remaining <= 0.0 {
            break;
        }
        let p = pd.min(remaining);
        alloc.push((bus, p));
        remaining -= p;
    }
    if remaining > 1e-15 {
        let total: f64 = demand.iter().map(|d| d.1).sum();
        for &(bus, pd) in &demand {
            let extra = remaining * pd / total;
            match alloc.iter_mut().find(|(b, _)| *b == bus) {
                Some(e) => e.1 += extra,
                None => alloc.push((bus, extra)),
            }
        }
    }
    for (bus, p) in alloc {
        out.res_units.push(ResUnit {
            bus,
            p_r: p,
            s_max: RES_RATING_FACTOR * p,
        });
    }
    out.normalize()
}

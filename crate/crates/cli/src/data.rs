use graphwave::fields::{random::domain_field, Bump, GraphField, Sum, Zero};
use graphwave::{MetricGraph, ValidatedSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::failure::Failure;
use crate::DataArgs;

pub struct Cauchy {
    pub psi0: Box<dyn GraphField>,
    pub psi_dot0: Box<dyn GraphField>,
    /// Farthest point of the support along any external edge.
    pub extent: f64,
}

/// `EDGE:CENTER:WIDTH[:AMP]`.
pub fn parse_bump(g: &MetricGraph, s: &str) -> Result<Bump, Failure> {
    let bad = |why: &str| Failure::Usage(format!("bad bump `{s}`: {why}"));
    let parts: Vec<&str> = s.split(':').collect();
    if !(3..=4).contains(&parts.len()) {
        return Err(bad("expected EDGE:CENTER:WIDTH[:AMP]"));
    }
    let edge = g.edge_id(parts[0]).map_err(|e| bad(&e.to_string()))?;
    let num = |t: &str| t.parse::<f64>().map_err(|_| bad(&format!("`{t}` is not a number")));
    let center = num(parts[1])?;
    let width = num(parts[2])?;
    let amplitude = if parts.len() == 4 { num(parts[3])? } else { 1.0 };
    if !(width > 0.0) {
        return Err(bad("width must be positive"));
    }
    if center - width <= 0.0 || center + width >= g.length(edge) {
        return Err(bad("support must lie inside the edge"));
    }
    Ok(Bump {
        edge,
        center,
        width,
        amplitude,
    })
}

pub fn cauchy(g: &MetricGraph, spec: &ValidatedSpec, args: &DataArgs) -> Result<Cauchy, Failure> {
    if args.bumps.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let psi0 = domain_field(&mut rng, g, spec, 0.25, 2, 1.0);
        let psi_dot0 = domain_field(&mut rng, g, spec, 0.25, 1, 1.0);
        return Ok(Cauchy {
            psi0: Box::new(psi0),
            psi_dot0: Box::new(psi_dot0),
            extent: if g.is_compact() { 0.0 } else { 1.0 },
        });
    }
    let mut sum = Sum::new();
    let mut extent: f64 = 0.0;
    for s in &args.bumps {
        let b = parse_bump(g, s)?;
        if g.edge(b.edge).is_external() {
            extent = extent.max(b.support().1);
        }
        sum = sum.with(b);
    }
    Ok(Cauchy {
        psi0: Box::new(sum),
        psi_dot0: Box::new(Zero),
        extent,
    })
}

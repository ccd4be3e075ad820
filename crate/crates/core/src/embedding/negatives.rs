use rand::Rng;

use crate::error::{Error, Result};
use crate::kg::{Triple, TripleSet};

/// Which side of a positive triple is replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Corruption {
    #[default]
    Tail,
    /// Head or tail with equal probability.
    Either,
}

/// Draws `n` distinct corrupted triples that are not members of `known`.
///
/// Replacement entities come from `pool`. Gives up with
/// [`Error::DegeneratePool`] after `1000 * n` consecutive rejections.
pub fn sample_negatives(
    triple: Triple,
    n: usize,
    known: &TripleSet,
    pool: &[u32],
    corruption: Corruption,
    rng: &mut impl Rng,
) -> Result<Vec<Triple>> {
    let limit = 1000 * n.max(1);
    let mut out: Vec<Triple> = Vec::with_capacity(n);
    let mut rejections = 0;
    if pool.is_empty() && n > 0 {
        return Err(Error::DegeneratePool(0));
    }
    while out.len() < n {
        let e = pool[rng.gen_range(0..pool.len())];
        let candidate = match corruption {
            Corruption::Tail => Triple { tail: e, ..triple },
            Corruption::Either if rng.gen_bool(0.5) => Triple { head: e, ..triple },
            Corruption::Either => Triple { tail: e, ..triple },
        };
        if known.contains(&candidate) || out.contains(&candidate) {
            rejections += 1;
            if rejections >= limit {
                return Err(Error::DegeneratePool(rejections));
            }
            continue;
        }
        rejections = 0;
        out.push(candidate);
    }
    Ok(out)
}

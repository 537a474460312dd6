use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// A training or evaluation block, optionally tied to an anchor index whose
/// loss is evaluated with the candidate fitted on the block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Block {
    pub anchor: Option<usize>,
    pub indices: Vec<usize>,
}

/// Disjoint index partitions of `0..n`.
///
/// Each side (`tr`, `cp`, `ev`) is either a flat set or the union of its
/// anchor set (`*_prime`) and its blocks. Indices dropped to keep every block
/// the same size are listed in `discarded`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SplitPlan {
    pub n: usize,
    pub i_tr: Vec<usize>,
    pub i_cp: Vec<usize>,
    pub i_ev: Vec<usize>,
    pub i_tr_prime: Vec<usize>,
    pub i_cp_prime: Vec<usize>,
    pub i_ev_prime: Vec<usize>,
    pub tr_blocks: Vec<Block>,
    pub cp_blocks: Vec<Block>,
    pub ev_blocks: Vec<Block>,
    pub block_size: usize,
    pub discarded: Vec<usize>,
}

impl SplitPlan {
    /// Checks disjointness, completeness and equal block sizes.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidPlan(msg));
        let mut seen = vec![false; self.n];
        for &i in self
            .i_tr
            .iter()
            .chain(&self.i_cp)
            .chain(&self.i_ev)
            .chain(&self.discarded)
        {
            if i >= self.n {
                return bad(format!("index {i} outside 0..{}", self.n));
            }
            if std::mem::replace(&mut seen[i], true) {
                return bad(format!("index {i} appears twice"));
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return bad(format!("index {i} is not assigned"));
        }
        let sides = [
            ("tr", &self.i_tr, &self.i_tr_prime, &self.tr_blocks),
            ("cp", &self.i_cp, &self.i_cp_prime, &self.cp_blocks),
            ("ev", &self.i_ev, &self.i_ev_prime, &self.ev_blocks),
        ];
        for (name, set, prime, blocks) in sides {
            if prime.is_empty() && blocks.is_empty() {
                continue;
            }
            let mut parts: Vec<usize> = prime.clone();
            for b in blocks {
                if b.indices.len() != self.block_size {
                    return bad(format!(
                        "{name} block of size {} but block size is {}",
                        b.indices.len(),
                        self.block_size
                    ));
                }
                parts.extend(&b.indices);
            }
            let lhs: BTreeSet<_> = set.iter().collect();
            let rhs: BTreeSet<_> = parts.iter().collect();
            if rhs.len() != parts.len() || lhs != rhs {
                return bad(format!("{name} anchors and blocks do not partition I_{name}"));
            }
        }
        let anchors: Vec<usize> = self
            .tr_blocks
            .iter()
            .chain(&self.cp_blocks)
            .chain(&self.ev_blocks)
            .filter_map(|b| b.anchor)
            .collect();
        let distinct: BTreeSet<_> = anchors.iter().collect();
        if distinct.len() != anchors.len() {
            return bad("an anchor is shared by two blocks".into());
        }
        for b in self.tr_blocks.iter().chain(&self.cp_blocks).chain(&self.ev_blocks) {
            if let Some(a) = b.anchor {
                if b.indices.contains(&a) {
                    return bad(format!("anchor {a} lies inside its own block"));
                }
            }
        }
        Ok(())
    }
}

fn permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Uniformly random split into `I_TR` of size `floor(n * frac_tr)` and `I_CP`.
pub fn split_two<R: Rng + ?Sized>(n: usize, rng: &mut R, frac_tr: f64) -> Result<SplitPlan> {
    if n < 2 {
        return Err(Error::DatasetTooSmall { need: 2, have: n });
    }
    if !(frac_tr > 0.0 && frac_tr < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "training fraction {frac_tr} must lie in (0, 1)"
        )));
    }
    let n_tr = (n as f64 * frac_tr).floor() as usize;
    if n_tr == 0 || n_tr == n {
        return Err(Error::InvalidParameter(format!(
            "training fraction {frac_tr} leaves an empty side for n = {n}"
        )));
    }
    let p = permutation(n, rng);
    Ok(SplitPlan {
        n,
        i_tr: p[..n_tr].to_vec(),
        i_cp: p[n_tr..].to_vec(),
        ..Default::default()
    })
}

/// Carves `side` into `k` anchors followed by `k` blocks of size `m`; returns
/// (anchors, blocks, retained, remainder).
fn anchored_blocks(side: &[usize], k: usize, m: usize) -> (Vec<usize>, Vec<Block>, Vec<usize>, Vec<usize>) {
    let anchors = side[..k].to_vec();
    let blocks = (0..k)
        .map(|j| Block {
            anchor: Some(anchors[j]),
            indices: side[k + j * m..k + (j + 1) * m].to_vec(),
        })
        .collect();
    let used = k + k * m;
    (anchors, blocks, side[..used].to_vec(), side[used..].to_vec())
}

/// `k` evaluation points, each paired with its own disjoint training block of
/// size `floor((n - k) / k)`.
pub fn split_zfree<R: Rng + ?Sized>(n: usize, rng: &mut R, k: usize) -> Result<SplitPlan> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if n < 2 * k {
        return Err(Error::DatasetTooSmall { need: 2 * k, have: n });
    }
    let m = (n - k) / k;
    let p = permutation(n, rng);
    let (i_ev, tr_blocks, used, discarded) = anchored_blocks(&p, k, m);
    Ok(SplitPlan {
        n,
        i_tr: used[k..].to_vec(),
        i_ev,
        tr_blocks,
        block_size: m,
        discarded,
        ..Default::default()
    })
}

fn anchored_sides<R: Rng + ?Sized>(n: usize, rng: &mut R, k: usize, sides: usize) -> Result<(Vec<(Vec<usize>, Vec<Block>, Vec<usize>)>, usize, Vec<usize>)> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    let part = n / sides;
    if part < 2 * k {
        return Err(Error::DatasetTooSmall {
            need: sides * 2 * k,
            have: n,
        });
    }
    let m = (part - k) / k;
    let p = permutation(n, rng);
    let mut discarded = p[sides * part..].to_vec();
    let mut out = Vec::with_capacity(sides);
    for s in 0..sides {
        let (anchors, blocks, used, rest) = anchored_blocks(&p[s * part..(s + 1) * part], k, m);
        discarded.extend(rest);
        out.push((anchors, blocks, used));
    }
    Ok((out, m, discarded))
}

/// Two halves of size `floor(n / 2)`, each holding `k` anchors and `k` blocks
/// of a common size `m`.
pub fn split_zmod<R: Rng + ?Sized>(n: usize, rng: &mut R, k: usize) -> Result<SplitPlan> {
    let (mut sides, m, discarded) = anchored_sides(n, rng, k, 2)?;
    let (cp_prime, cp_blocks, i_cp) = sides.pop().unwrap();
    let (tr_prime, tr_blocks, i_tr) = sides.pop().unwrap();
    Ok(SplitPlan {
        n,
        i_tr,
        i_cp,
        i_tr_prime: tr_prime,
        i_cp_prime: cp_prime,
        tr_blocks,
        cp_blocks,
        block_size: m,
        discarded,
        ..Default::default()
    })
}

/// Three anchored thirds for the symbolic construction: one to learn scores,
/// one to fit their conditional quantile, one to calibrate.
pub fn split_symbolic<R: Rng + ?Sized>(n: usize, rng: &mut R, k: usize) -> Result<SplitPlan> {
    let (mut sides, m, discarded) = anchored_sides(n, rng, k, 3)?;
    let (cp_prime, cp_blocks, i_cp) = sides.pop().unwrap();
    let (ev_prime, ev_blocks, i_ev) = sides.pop().unwrap();
    let (tr_prime, tr_blocks, i_tr) = sides.pop().unwrap();
    Ok(SplitPlan {
        n,
        i_tr,
        i_cp,
        i_ev,
        i_tr_prime: tr_prime,
        i_cp_prime: cp_prime,
        i_ev_prime: ev_prime,
        tr_blocks,
        cp_blocks,
        ev_blocks,
        block_size: m,
        discarded,
    })
}

/// Splits `I_CP` of an existing plan into `k` unanchored blocks of equal
/// size; the random remainder moves to `discarded`.
pub fn split_cal_blocks<R: Rng + ?Sized>(
    plan: &SplitPlan,
    rng: &mut R,
    k: usize,
) -> Result<SplitPlan> {
    let available = plan.i_cp.len();
    if k == 0 || k > available {
        return Err(Error::BlockCountTooLarge {
            blocks: k,
            available,
        });
    }
    let m = available / k;
    let mut cp = plan.i_cp.clone();
    cp.shuffle(rng);
    let mut out = plan.clone();
    out.cp_blocks = cp[..k * m]
        .chunks(m)
        .map(|c| Block {
            anchor: None,
            indices: c.to_vec(),
        })
        .collect();
    out.discarded.extend(&cp[k * m..]);
    out.i_cp = cp[..k * m].to_vec();
    out.i_cp_prime.clear();
    out.block_size = m;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use crate::data::RngStream;
    use proptest::prelude::*;

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        RngStream::new(seed).rng()
    }

    #[test]
    fn two_way_sizes() {
        let p = split_two(10, &mut rng(1), 0.5).unwrap();
        assert_eq!((p.i_tr.len(), p.i_cp.len()), (5, 5));
        p.validate().unwrap();
        let p = split_two(7500, &mut rng(1), 0.5).unwrap();
        assert_eq!((p.i_tr.len(), p.i_cp.len()), (3750, 3750));
        assert_eq!(split_two(10, &mut rng(4), 0.5).unwrap(), split_two(10, &mut rng(4), 0.5).unwrap());
        assert!(matches!(split_two(1, &mut rng(1), 0.5), Err(Error::DatasetTooSmall { .. })));
    }

    #[test]
    fn zfree_sizes() {
        let p = split_zfree(75_000, &mut rng(2), 1000).unwrap();
        assert_eq!(p.block_size, 74);
        p.validate().unwrap();
        let p = split_zfree(21, &mut rng(2), 4).unwrap();
        assert_eq!((p.block_size, p.discarded.len(), p.i_ev.len()), (4, 1, 4));
        p.validate().unwrap();
        let p = split_zfree(10, &mut rng(2), 5).unwrap();
        assert_eq!(p.block_size, 1);
        assert!(matches!(split_zfree(9, &mut rng(2), 5), Err(Error::DatasetTooSmall { .. })));
    }

    #[test]
    fn zmod_sizes() {
        let p = split_zmod(4000, &mut rng(3), 50).unwrap();
        assert_eq!(p.block_size, 39);
        assert_eq!((p.i_tr_prime.len(), p.i_cp_prime.len()), (50, 50));
        p.validate().unwrap();
        let p = split_zmod(11, &mut rng(3), 1).unwrap();
        assert_eq!(p.block_size, 4);
        assert_eq!(p.discarded.len(), 1);
        p.validate().unwrap();
    }

    #[test]
    fn cal_blocks() {
        let base = SplitPlan {
            n: 103,
            i_cp: (0..103).collect(),
            ..Default::default()
        };
        let p = split_cal_blocks(&base, &mut rng(5), 10).unwrap();
        assert_eq!((p.cp_blocks.len(), p.block_size, p.discarded.len()), (10, 10, 3));
        p.validate().unwrap();
        let p = split_cal_blocks(&base, &mut rng(5), 103).unwrap();
        assert_eq!(p.block_size, 1);
        assert!(matches!(
            split_cal_blocks(&base, &mut rng(5), 104),
            Err(Error::BlockCountTooLarge { blocks: 104, available: 103 })
        ));
    }

    #[test]
    fn validate_catches_overlap() {
        let mut p = split_two(6, &mut rng(1), 0.5).unwrap();
        p.i_cp[0] = p.i_tr[0];
        assert!(p.validate().is_err());
    }

    #[test]
    fn inclusion_frequency_is_uniform() {
        let mut counts = [0usize; 6];
        let trials = 10_000;
        for s in 0..trials {
            let p = split_two(6, &mut RngStream::new(s).rng(), 0.5).unwrap();
            for &i in &p.i_tr {
                counts[i] += 1;
            }
        }
        for c in counts {
            assert!((c as f64 / trials as f64 - 0.5).abs() < 0.02);
        }
    }

    #[test]
    fn disjointness_fuzz() {
        let mut r = rng(77);
        for _ in 0..1000 {
            let k = r.random_range(1..=20);
            let n = r.random_range(4 * k..=4 * k + 200);
            split_zmod(n, &mut r, k).unwrap().validate().unwrap();
            let k3 = r.random_range(1..=10);
            let n3 = r.random_range(6 * k3..=6 * k3 + 100);
            split_symbolic(n3, &mut r, k3).unwrap().validate().unwrap();
        }
    }

    proptest! {
        #[test]
        fn zfree_partition_sound(k in 1usize..40, extra in 0usize..300, seed in any::<u64>()) {
            let n = 2 * k + extra;
            let p = split_zfree(n, &mut rng(seed), k).unwrap();
            prop_assert!(p.validate().is_ok());
            prop_assert_eq!(p.block_size, (n - k) / k);
        }

        #[test]
        fn two_way_partition_sound(n in 2usize..500, frac in 0.05f64..0.95, seed in any::<u64>()) {
            if let Ok(p) = split_two(n, &mut rng(seed), frac) {
                prop_assert!(p.validate().is_ok());
                prop_assert_eq!(p.i_tr.len(), (n as f64 * frac).floor() as usize);
            }
        }
    }
}

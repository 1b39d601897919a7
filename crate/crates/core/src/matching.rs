//! Program matching: location bijection by successor propagation, per
//! variable trace comparison, and an injective full variable mapping by
//! bipartite matching.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::interp::{run_all, InputSet};
use crate::model::{Ident, LocId, Program, Target, Trace};

pub type Kappa = BTreeMap<LocId, LocId>;

/// Candidate (spec variable, impl variable) pairs.
pub type PotentialMatches = BTreeSet<(Ident, Ident)>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MatchWitness {
    pub kappa: Kappa,
    pub pi: BTreeMap<Ident, Ident>,
    /// Spec variables whose match relied on the reference side being undefined
    /// at a step where the implementation held a value.
    pub undef_tolerated: Vec<Ident>,
}

/// The location bijection obtained by mapping `p.init` to `q.init` and
/// propagating along both successor branches; `None` if propagation
/// conflicts or does not cover both programs.
pub fn structure_match(p: &Program, q: &Program) -> Option<Kappa> {
    if p.locations.len() != q.locations.len() {
        return None;
    }
    let mut kappa: Kappa = BTreeMap::new();
    let mut image: BTreeMap<LocId, LocId> = BTreeMap::new();
    kappa.insert(p.init, q.init);
    image.insert(q.init, p.init);
    let mut queue = VecDeque::from([p.init]);
    while let Some(l1) = queue.pop_front() {
        let l2 = kappa[&l1];
        for b in [true, false] {
            match (p.succ(l1, b), q.succ(l2, b)) {
                (Target::End, Target::End) => {}
                (Target::Loc(t1), Target::Loc(t2)) => match (kappa.get(&t1), image.get(&t2)) {
                    (Some(m), _) if *m != t2 => return None,
                    (None, Some(_)) => return None,
                    (Some(_), _) => {}
                    (None, None) => {
                        kappa.insert(t1, t2);
                        image.insert(t2, t1);
                        queue.push_back(t1);
                    }
                },
                _ => return None,
            }
        }
    }
    (kappa.len() == p.locations.len() && image.len() == q.locations.len()).then_some(kappa)
}

/// Variable matching: equal length and, at every step, the reference
/// post-value is undefined or equals the implementation post-value.
pub fn var_matches(t1: &Trace, t2: &Trace, v1: &str, v2: &str) -> bool {
    t1.len() == t2.len()
        && t1.steps.iter().zip(&t2.steps).all(|(a, b)| {
            let x = a.mem.get_post(v1);
            x.is_undef() || x == b.mem.get_post(v2)
        })
}

fn relies_on_undef(t1: &Trace, t2: &Trace, v1: &str, v2: &str) -> bool {
    t1.steps
        .iter()
        .zip(&t2.steps)
        .any(|(a, b)| a.mem.get_post(v1).is_undef() && !b.mem.get_post(v2).is_undef())
}

/// Injective mapping covering every spec variable, drawn from `m`, with
/// each special variable mapped to itself. Augmenting paths over sorted
/// names make the result deterministic.
pub fn find_full_mapping(
    m: &PotentialMatches,
    spec_vars: &[Ident],
    impl_vars: &[Ident],
    specials: &BTreeSet<Ident>,
) -> Option<BTreeMap<Ident, Ident>> {
    let impl_set: BTreeSet<&Ident> = impl_vars.iter().collect();
    let mut spec_sorted: Vec<&Ident> = spec_vars.iter().collect();
    spec_sorted.sort();
    let mut adj: BTreeMap<&Ident, Vec<&Ident>> = BTreeMap::new();
    for v1 in &spec_sorted {
        let opts: Vec<&Ident> = if specials.contains(*v1) {
            if m.contains(&((*v1).clone(), (*v1).clone())) && impl_set.contains(*v1) {
                vec![*v1]
            } else {
                return None;
            }
        } else {
            m.iter()
                .filter(|(a, b)| a == *v1 && impl_set.contains(b) && !specials.contains(b))
                .map(|(_, b)| b)
                .collect()
        };
        if opts.is_empty() {
            return None;
        }
        adj.insert(v1, opts);
    }
    let mut owner: BTreeMap<&Ident, &Ident> = BTreeMap::new();
    fn augment<'a>(
        v1: &'a Ident,
        adj: &BTreeMap<&'a Ident, Vec<&'a Ident>>,
        owner: &mut BTreeMap<&'a Ident, &'a Ident>,
        seen: &mut BTreeSet<&'a Ident>,
    ) -> bool {
        for &v2 in &adj[v1] {
            if !seen.insert(v2) {
                continue;
            }
            let free = match owner.get(v2) {
                None => true,
                Some(&other) => augment(other, adj, owner, seen),
            };
            if free {
                owner.insert(v2, v1);
                return true;
            }
        }
        false
    }
    for v1 in &spec_sorted {
        let mut seen = BTreeSet::new();
        if !augment(v1, &adj, &mut owner, &mut seen) {
            return None;
        }
    }
    Some(owner.into_iter().map(|(v2, v1)| (v1.clone(), v2.clone())).collect())
}

/// Potential matches from already computed traces (one per input, in
/// the same order for both programs).
pub fn potential_matches(p: &Program, q: &Program, kappa: &Kappa, t1: &[Trace], t2: &[Trace]) -> Option<PotentialMatches> {
    for (a, b) in t1.iter().zip(t2) {
        if a.len() != b.len() || a.steps.iter().zip(&b.steps).any(|(x, y)| kappa.get(&x.loc) != Some(&y.loc)) {
            return None;
        }
    }
    let mut out = BTreeSet::new();
    for v1 in &p.vars {
        for v2 in &q.vars {
            if t1.iter().zip(t2).all(|(a, b)| var_matches(a, b, v1, v2)) {
                out.insert((v1.clone(), v2.clone()));
            }
        }
    }
    Some(out)
}

/// Whether `p` (spec) matches `q` given spec traces already computed on
/// `ins`.
pub fn matches_with_traces(
    p: &Program,
    spec_traces: &[Trace],
    q: &Program,
    ins: &InputSet,
    step_limit: usize,
) -> Option<MatchWitness> {
    let kappa = structure_match(p, q)?;
    let impl_traces: Vec<Trace> = run_all(q, ins, step_limit).into_iter().map(|o| o.into_trace()).collect::<Option<_>>()?;
    let pm = potential_matches(p, q, &kappa, spec_traces, &impl_traces)?;
    let pi = find_full_mapping(&pm, &p.vars, &q.vars, &p.special_vars)?;
    let undef_tolerated = pi
        .iter()
        .filter(|(v1, v2)| spec_traces.iter().zip(&impl_traces).any(|(a, b)| relies_on_undef(a, b, v1, v2)))
        .map(|(v1, _)| v1.clone())
        .collect();
    Some(MatchWitness { kappa, pi, undef_tolerated })
}

/// Spec traces of `p` on `ins`, or `None` if any run fails.
pub fn spec_traces(p: &Program, ins: &InputSet, step_limit: usize) -> Option<Vec<Trace>> {
    run_all(p, ins, step_limit).into_iter().map(|o| o.into_trace()).collect()
}

/// `P ⊑ Q` on `ins`: same structure, every run of both defined and
/// aligned, and an injective variable mapping with matching traces.
pub fn matches(p: &Program, q: &Program, ins: &InputSet, step_limit: usize) -> Option<MatchWitness> {
    structure_match(p, q)?;
    let t1 = spec_traces(p, ins, step_limit)?;
    matches_with_traces(p, &t1, q, ins, step_limit)
}

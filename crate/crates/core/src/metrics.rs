//! RMSE and tree edit distances against a ground-truth expression.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::expr::{Operator, SymbolicTree};

/// `(n^{-1} sum (y_i - yhat_i)^2)^{1/2}`.
pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::Config(format!("length mismatch: {} vs {}", y.len(), y_hat.len())));
    }
    if y.is_empty() {
        return Err(Error::Config("rmse of empty vectors".into()));
    }
    let ss: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / y.len() as f64).sqrt())
}

/// Postorder flattening used by Zhang-Shasha.
struct Flat {
    labels: Vec<String>,
    /// Postorder index of the leftmost leaf under each node.
    leftmost: Vec<usize>,
    keyroots: Vec<usize>,
}

fn label(tree: &SymbolicTree) -> String {
    match tree {
        SymbolicTree::Terminal(h) => format!("x{}", h + 1),
        SymbolicTree::Unary(op, _) | SymbolicTree::Binary(op, _, _) => op.name().to_string(),
    }
}

impl Flat {
    fn new(tree: &SymbolicTree) -> Flat {
        let mut flat = Flat {
            labels: Vec::new(),
            leftmost: Vec::new(),
            keyroots: Vec::new(),
        };
        flat.visit(tree);
        let n = flat.labels.len();
        // keyroots: nodes with no later node sharing their leftmost leaf
        let mut seen = vec![false; n];
        for i in (0..n).rev() {
            let l = flat.leftmost[i];
            if !seen[l] {
                seen[l] = true;
                flat.keyroots.push(i);
            }
        }
        flat.keyroots.sort_unstable();
        flat
    }

    fn visit(&mut self, tree: &SymbolicTree) -> usize {
        let first = match tree {
            SymbolicTree::Terminal(_) => None,
            SymbolicTree::Unary(_, c) => Some(self.visit(c)),
            SymbolicTree::Binary(_, l, r) => {
                let first = self.visit(l);
                self.visit(r);
                Some(first)
            }
        };
        let idx = self.labels.len();
        self.labels.push(label(tree));
        self.leftmost.push(first.map_or(idx, |c| self.leftmost[c]));
        idx
    }
}

/// Unit-cost ordered tree edit distance between the raw trees (no
/// canonicalization).
pub fn ordered_edit_distance(a: &SymbolicTree, b: &SymbolicTree) -> usize {
    let fa = Flat::new(a);
    let fb = Flat::new(b);
    let (na, nb) = (fa.labels.len(), fb.labels.len());
    let mut td = vec![vec![0usize; nb]; na];
    let mut fd = vec![vec![0usize; nb + 1]; na + 1];
    for &i in &fa.keyroots {
        for &j in &fb.keyroots {
            let (li, lj) = (fa.leftmost[i], fb.leftmost[j]);
            let (m, n) = (i - li + 1, j - lj + 1);
            fd[0][0] = 0;
            for x in 1..=m {
                fd[x][0] = fd[x - 1][0] + 1;
            }
            for y in 1..=n {
                fd[0][y] = fd[0][y - 1] + 1;
            }
            for x in 1..=m {
                for y in 1..=n {
                    let (ia, jb) = (li + x - 1, lj + y - 1);
                    let del = fd[x - 1][y] + 1;
                    let ins = fd[x][y - 1] + 1;
                    if fa.leftmost[ia] == li && fb.leftmost[jb] == lj {
                        let rel = fd[x - 1][y - 1] + usize::from(fa.labels[ia] != fb.labels[jb]);
                        fd[x][y] = del.min(ins).min(rel);
                        td[ia][jb] = fd[x][y];
                    } else {
                        let px = fa.leftmost[ia] - li;
                        let py = fb.leftmost[jb] - lj;
                        fd[x][y] = del.min(ins).min(fd[px][py] + td[ia][jb]);
                    }
                }
            }
        }
    }
    td[na - 1][nb - 1]
}

const MAX_SWAP_VARIANTS: usize = 256;

/// Every operand order of `tree` reachable by swapping commutative children,
/// or `None` past the variant cap.
fn swap_variants(tree: &SymbolicTree) -> Option<Vec<SymbolicTree>> {
    match tree {
        SymbolicTree::Terminal(_) => Some(vec![tree.clone()]),
        SymbolicTree::Unary(op, c) => Some(
            swap_variants(c)?
                .into_iter()
                .map(|v| SymbolicTree::Unary(*op, Box::new(v)))
                .collect(),
        ),
        SymbolicTree::Binary(op, l, r) => {
            let (lv, rv) = (swap_variants(l)?, swap_variants(r)?);
            let swap = op.is_commutative() && l != r;
            let n = lv.len() * rv.len() * if swap { 2 } else { 1 };
            if n > MAX_SWAP_VARIANTS {
                return None;
            }
            let mut out = Vec::with_capacity(n);
            for a in &lv {
                for b in &rv {
                    out.push(SymbolicTree::binary(*op, a.clone(), b.clone()));
                    if swap {
                        out.push(SymbolicTree::binary(*op, b.clone(), a.clone()));
                    }
                }
            }
            Some(out)
        }
    }
}

const MAX_VARIANT_PAIRS: usize = 4096;

fn one_sided(variants: &[SymbolicTree], fixed: &SymbolicTree) -> usize {
    variants.iter().map(|v| ordered_edit_distance(v, fixed)).min().expect("at least one variant")
}

/// Edit distance modulo commutativity of `+` and `*`: the minimum ordered
/// distance over operand swaps of both trees. Past the variant cap the
/// search keeps one side in canonical order.
pub fn tree_edit_distance(a: &SymbolicTree, b: &SymbolicTree) -> usize {
    let (a, b) = (a.canonical_ordered(), b.canonical_ordered());
    match (swap_variants(&a), swap_variants(&b)) {
        (Some(va), Some(vb)) if va.len() * vb.len() <= MAX_VARIANT_PAIRS => va
            .iter()
            .flat_map(|x| vb.iter().map(move |y| ordered_edit_distance(x, y)))
            .min()
            .expect("at least one variant"),
        (Some(va), Some(vb)) => one_sided(&va, &b).min(one_sided(&vb, &a)),
        (Some(va), None) => one_sided(&va, &b),
        (None, Some(vb)) => one_sided(&vb, &a),
        (None, None) => ordered_edit_distance(&a, &b),
    }
}

pub fn min_distance(distances: &[usize]) -> Option<usize> {
    distances.iter().copied().min()
}

const MAX_TERMS: usize = 64;
/// Forests up to this size are searched over all tree subsets.
const MAX_SUBSET_TREES: usize = 10;

/// Product of atoms with integer exponents, keyed by atom canonical string.
type Monomial = BTreeMap<String, (SymbolicTree, i32)>;

/// Signed sum of monomials.
type Poly = Vec<(f64, Monomial)>;

fn mul_poly(a: &Poly, b: &Poly) -> Option<Poly> {
    if a.len() * b.len() > MAX_TERMS {
        return None;
    }
    let mut out = Vec::with_capacity(a.len() * b.len());
    for (ca, ma) in a {
        for (cb, mb) in b {
            let mut m = ma.clone();
            for (k, (atom, e)) in mb {
                m.entry(k.clone()).or_insert_with(|| (atom.clone(), 0)).1 += e;
            }
            m.retain(|_, v| v.1 != 0);
            out.push((ca * cb, m));
        }
    }
    Some(out)
}

fn monomial_key(m: &Monomial) -> Vec<(&str, i32)> {
    m.iter().map(|(k, (_, e))| (k.as_str(), *e)).collect()
}

/// Merges like monomials and drops the ones that cancel.
fn merge(poly: Poly) -> Poly {
    let mut out: Poly = Vec::new();
    for (c, m) in poly {
        match out.iter_mut().find(|(_, o)| monomial_key(o) == monomial_key(&m)) {
            Some(slot) => slot.0 += c,
            None => out.push((c, m)),
        }
    }
    out.retain(|t| t.0.abs() > 1e-12);
    out
}

fn atom(tree: &SymbolicTree) -> Poly {
    let t = tree.canonical_ordered();
    let mut m = Monomial::new();
    m.insert(t.canonical_string(), (t, 1));
    vec![(1.0, m)]
}

/// Expands `tree` into a signed sum of monomials: `*` distributes over `+`,
/// `neg` becomes a sign, `pow2`/`pow3` multiply out and `inv` of a single
/// monomial negates its exponents. Anything else is an opaque atom. Returns
/// `None` once the expansion exceeds the term cap.
fn expand(tree: &SymbolicTree) -> Option<Poly> {
    match tree {
        SymbolicTree::Binary(Operator::Add, l, r) => {
            let mut terms = expand(l)?;
            terms.extend(expand(r)?);
            (terms.len() <= MAX_TERMS).then_some(terms)
        }
        SymbolicTree::Binary(Operator::Mul, l, r) => mul_poly(&expand(l)?, &expand(r)?),
        SymbolicTree::Unary(Operator::Neg, c) => Some(expand(c)?.into_iter().map(|(k, m)| (-k, m)).collect()),
        SymbolicTree::Unary(Operator::Pow2, c) => {
            let e = expand(c)?;
            mul_poly(&e, &e)
        }
        SymbolicTree::Unary(Operator::Pow3, c) => {
            let e = expand(c)?;
            mul_poly(&mul_poly(&e, &e)?, &e)
        }
        SymbolicTree::Unary(Operator::Inv, c) => match merge(expand(c)?).as_slice() {
            [(k, m)] => {
                let m = m.iter().map(|(key, (a, e))| (key.clone(), (a.clone(), -e))).collect();
                Some(vec![(1.0 / k, m)])
            }
            _ => Some(atom(tree)),
        },
        other => Some(atom(other)),
    }
}

fn chain(op: Operator, mut items: Vec<SymbolicTree>) -> SymbolicTree {
    items.sort_by_cached_key(SymbolicTree::canonical_string);
    let mut it = items.into_iter();
    let first = it.next().expect("nonempty chain");
    it.fold(first, |acc, t| SymbolicTree::binary(op, acc, t))
}

/// `atom^e` as `pow2`/`pow3` chains, under `inv` for negative `e`.
fn power(atom: &SymbolicTree, e: i32) -> SymbolicTree {
    let mut k = e.unsigned_abs();
    let mut parts = Vec::new();
    while k > 0 {
        let step = k.min(3);
        parts.push(match step {
            1 => atom.clone(),
            2 => SymbolicTree::unary(Operator::Pow2, atom.clone()),
            _ => SymbolicTree::unary(Operator::Pow3, atom.clone()),
        });
        k -= step;
    }
    let base = chain(Operator::Mul, parts);
    if e < 0 {
        SymbolicTree::unary(Operator::Inv, base)
    } else {
        base
    }
}

/// Non-constant terms of `tree` with merged coefficients, keyed by the
/// canonical string of the rebuilt monomial. Terms that cancel are dropped;
/// constants belong to the intercept.
fn term_counts(tree: &SymbolicTree) -> Option<Vec<(String, SymbolicTree, f64)>> {
    let mut out: Vec<(String, SymbolicTree, f64)> = Vec::new();
    for (coef, mono) in expand(tree)? {
        if mono.is_empty() {
            continue;
        }
        let product = chain(Operator::Mul, mono.values().map(|(a, e)| power(a, *e)).collect());
        let key = product.canonical_string();
        match out.iter_mut().find(|(k, _, _)| *k == key) {
            Some(slot) => slot.2 += coef,
            None => out.push((key, product, coef)),
        }
    }
    out.retain(|t| t.2.abs() > 1e-12);
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Some(out)
}

/// Sum-of-monomials normal form of an additive collection of trees. Each
/// tree is expanded, its terms merged, and the distinct terms of all trees
/// rebuilt as a sorted chain; coefficients are dropped since a forest fits
/// them freely. `None` when the expansion is too large or has no terms.
pub fn additive_form(trees: &[&SymbolicTree]) -> Option<SymbolicTree> {
    let mut terms: Vec<(String, SymbolicTree)> = Vec::new();
    for t in trees {
        for (key, product, _) in term_counts(t)? {
            if !terms.iter().any(|(k, _)| *k == key) {
                terms.push((key, product));
            }
        }
        if terms.len() > MAX_TERMS {
            return None;
        }
    }
    if terms.is_empty() {
        return None;
    }
    Some(chain(Operator::Add, terms.into_iter().map(|(_, t)| t).collect()))
}

/// Per-tree distances from each forest member to the truth.
pub fn per_tree_distances(forest: &[SymbolicTree], truth: &SymbolicTree) -> Vec<usize> {
    forest.iter().map(|t| tree_edit_distance(t, truth)).collect()
}

fn subsets(k: usize) -> Vec<Vec<usize>> {
    if k <= MAX_SUBSET_TREES {
        (1..(1usize << k))
            .map(|mask| (0..k).filter(|j| mask >> j & 1 == 1).collect())
            .collect()
    } else {
        let mut out: Vec<Vec<usize>> = (0..k).map(|j| vec![j]).collect();
        out.push((0..k).collect());
        out
    }
}

fn subset_distance(forest: &[SymbolicTree], subset: &[usize], truth_form: Option<&SymbolicTree>, truth: &SymbolicTree) -> usize {
    let single = match subset {
        [j] => tree_edit_distance(&forest[*j], truth),
        _ => usize::MAX,
    };
    let refs: Vec<&SymbolicTree> = subset.iter().map(|&j| &forest[j]).collect();
    let joint = match (additive_form(&refs), truth_form) {
        (Some(f), Some(t)) => ordered_edit_distance(&f, t),
        _ => usize::MAX,
    };
    single.min(joint)
}

/// Minimum edit distance between a forest and the truth. Besides the best
/// single tree, any sub-sum of the forest is compared with the truth through
/// their sum-of-products normal forms, so a forest whose trees add up to the
/// truth term by term (or to a scaled copy of it) also scores zero.
pub fn mged(forest: &[SymbolicTree], truth: &SymbolicTree) -> usize {
    let truth_form = additive_form(&[truth]);
    subsets(forest.len())
        .iter()
        .map(|s| subset_distance(forest, s, truth_form.as_ref(), truth))
        .min()
        .unwrap_or(usize::MAX)
}

/// Coefficients the fitted forest places on each product term of the truth
/// (terms in canonical order), taken from the smallest sub-sum of trees that
/// recovers the truth. A tree contributes its coefficient times the number
/// of times the term appears in its expansion. `None` when no sub-sum
/// recovers the truth.
pub fn truth_term_coefficients(forest: &[SymbolicTree], beta: &[f64], truth: &SymbolicTree) -> Option<Vec<f64>> {
    if beta.len() != forest.len() {
        return None;
    }
    let truth_form = additive_form(&[truth]);
    let truth_terms = term_counts(truth)?;
    let mut best: Option<Vec<usize>> = None;
    for s in subsets(forest.len()) {
        if subset_distance(forest, &s, truth_form.as_ref(), truth) == 0
            && best.as_ref().is_none_or(|b| s.len() < b.len())
        {
            best = Some(s);
        }
    }
    let best = best?;
    let counts: Vec<Vec<(String, SymbolicTree, f64)>> = best
        .iter()
        .map(|&j| term_counts(&forest[j]).unwrap_or_default())
        .collect();
    Some(
        truth_terms
            .iter()
            .map(|(key, _, _)| {
                best.iter()
                    .zip(&counts)
                    .map(|(&j, tc)| {
                        let m = tc.iter().find(|(k, _, _)| k == key).map_or(0.0, |c| c.2);
                        beta[j] * m
                    })
                    .sum()
            })
            .collect(),
    )
}

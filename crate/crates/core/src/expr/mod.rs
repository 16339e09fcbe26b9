//! Symbolic expression trees over a configurable operator set.
//!
//! Terminals hold 0-based feature indices internally; every text form
//! (canonical strings, the parser, reports) uses 1-based `x1..xp`.

mod parse;

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use parse::parse_expression;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arity {
    Unary,
    Binary,
}

/// Built-in operators. Subtraction and division are expressed through
/// `neg` and `inv` compositions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Exp,
    Inv,
    Neg,
    Sin,
    Cos,
    Pow2,
    Pow3,
    Add,
    Mul,
}

impl Operator {
    pub const ALL: [Operator; 9] = [
        Operator::Exp,
        Operator::Inv,
        Operator::Neg,
        Operator::Sin,
        Operator::Cos,
        Operator::Pow2,
        Operator::Pow3,
        Operator::Add,
        Operator::Mul,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Operator::Exp => "exp",
            Operator::Inv => "inv",
            Operator::Neg => "neg",
            Operator::Sin => "sin",
            Operator::Cos => "cos",
            Operator::Pow2 => "pow2",
            Operator::Pow3 => "pow3",
            Operator::Add => "add",
            Operator::Mul => "mul",
        }
    }

    pub fn from_name(name: &str) -> Option<Operator> {
        Operator::ALL.iter().copied().find(|op| op.name() == name)
    }

    pub fn arity(self) -> Arity {
        match self {
            Operator::Add | Operator::Mul => Arity::Binary,
            _ => Arity::Unary,
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, Operator::Add | Operator::Mul)
    }

    #[inline]
    pub fn apply_unary(self, x: f64) -> f64 {
        match self {
            Operator::Exp => x.exp(),
            Operator::Inv => 1.0 / x,
            Operator::Neg => -x,
            Operator::Sin => x.sin(),
            Operator::Cos => x.cos(),
            Operator::Pow2 => x * x,
            Operator::Pow3 => x * x * x,
            Operator::Add | Operator::Mul => unreachable!("binary operator applied to one operand"),
        }
    }

    #[inline]
    pub fn apply_binary(self, a: f64, b: f64) -> f64 {
        match self {
            Operator::Add => a + b,
            Operator::Mul => a * b,
            _ => unreachable!("unary operator applied to two operands"),
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordered operator set. The position of an operator is its index in
/// operator-weight vectors and frequency counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorSet {
    ops: Vec<Operator>,
}

impl Default for OperatorSet {
    fn default() -> Self {
        OperatorSet {
            ops: Operator::ALL.to_vec(),
        }
    }
}

impl OperatorSet {
    pub fn new(ops: Vec<Operator>) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::Config("operator set is empty".into()));
        }
        for (i, op) in ops.iter().enumerate() {
            if ops[..i].contains(op) {
                return Err(Error::Config(format!("operator `{op}` listed twice")));
            }
        }
        Ok(OperatorSet { ops })
    }

    /// Parses a comma-separated list such as `exp,inv,add,mul`.
    pub fn from_names(list: &str) -> Result<Self> {
        let ops = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|name| Operator::from_name(name).ok_or_else(|| Error::UnknownOperator(name.into())))
            .collect::<Result<Vec<_>>>()?;
        OperatorSet::new(ops)
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn ops(&self) -> &[Operator] {
        &self.ops
    }

    pub fn index_of(&self, op: Operator) -> Option<usize> {
        self.ops.iter().position(|&o| o == op)
    }

    pub fn contains(&self, op: Operator) -> bool {
        self.ops.contains(&op)
    }

    pub fn unary(&self) -> impl Iterator<Item = Operator> + '_ {
        self.ops.iter().copied().filter(|op| op.arity() == Arity::Unary)
    }

    pub fn binary(&self) -> impl Iterator<Item = Operator> + '_ {
        self.ops.iter().copied().filter(|op| op.arity() == Arity::Binary)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.ops.iter().map(|op| op.name()).collect()
    }
}

/// Rooted expression tree. `Terminal` holds a 0-based feature index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SymbolicTree {
    Terminal(usize),
    Unary(Operator, Box<SymbolicTree>),
    Binary(Operator, Box<SymbolicTree>, Box<SymbolicTree>),
}

/// Location of a node in preorder, with its depth (root is depth 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeSite {
    pub index: usize,
    pub depth: usize,
    pub terminal: bool,
}

/// Frequency summaries consumed by the tree prior and the Dirichlet terms.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TreeSummary {
    /// Operator counts aligned with the operator set.
    pub xi: Vec<usize>,
    /// Feature counts, length p.
    pub rho: Vec<usize>,
    /// Nonterminal node counts per depth.
    pub nonterminals_by_depth: Vec<usize>,
    /// Terminal node counts per depth.
    pub terminals_by_depth: Vec<usize>,
}

impl TreeSummary {
    pub fn size(&self) -> usize {
        self.xi.iter().sum()
    }

    pub fn terminal_count(&self) -> usize {
        self.rho.iter().sum()
    }
}

/// Column-wise evaluation of a tree over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnEval {
    pub values: Vec<f64>,
    pub finite: bool,
}

impl SymbolicTree {
    /// Terminal for the 1-based feature `x{index}`.
    pub fn x(index: usize) -> SymbolicTree {
        assert!(index >= 1, "feature indices are 1-based");
        SymbolicTree::Terminal(index - 1)
    }

    pub fn unary(op: Operator, child: SymbolicTree) -> SymbolicTree {
        debug_assert_eq!(op.arity(), Arity::Unary);
        SymbolicTree::Unary(op, Box::new(child))
    }

    pub fn binary(op: Operator, left: SymbolicTree, right: SymbolicTree) -> SymbolicTree {
        debug_assert_eq!(op.arity(), Arity::Binary);
        SymbolicTree::Binary(op, Box::new(left), Box::new(right))
    }

    pub fn add(left: SymbolicTree, right: SymbolicTree) -> SymbolicTree {
        SymbolicTree::binary(Operator::Add, left, right)
    }

    pub fn mul(left: SymbolicTree, right: SymbolicTree) -> SymbolicTree {
        SymbolicTree::binary(Operator::Mul, left, right)
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, SymbolicTree::Terminal(_))
    }

    pub fn depth(&self) -> usize {
        match self {
            SymbolicTree::Terminal(_) => 0,
            SymbolicTree::Unary(_, c) => 1 + c.depth(),
            SymbolicTree::Binary(_, l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    /// Number of nonterminal (operator) nodes.
    pub fn size(&self) -> usize {
        match self {
            SymbolicTree::Terminal(_) => 0,
            SymbolicTree::Unary(_, c) => 1 + c.size(),
            SymbolicTree::Binary(_, l, r) => 1 + l.size() + r.size(),
        }
    }

    pub fn terminal_count(&self) -> usize {
        match self {
            SymbolicTree::Terminal(_) => 1,
            SymbolicTree::Unary(_, c) => c.terminal_count(),
            SymbolicTree::Binary(_, l, r) => l.terminal_count() + r.terminal_count(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.size() + self.terminal_count()
    }

    /// Largest 0-based feature index referenced.
    pub fn max_feature(&self) -> usize {
        match self {
            SymbolicTree::Terminal(h) => *h,
            SymbolicTree::Unary(_, c) => c.max_feature(),
            SymbolicTree::Binary(_, l, r) => l.max_feature().max(r.max_feature()),
        }
    }

    /// Checks feature indices against `p` and operators against `ops`.
    pub fn validate(&self, p: usize, ops: &OperatorSet) -> Result<()> {
        match self {
            SymbolicTree::Terminal(h) => {
                if *h >= p {
                    return Err(Error::Structure(format!(
                        "feature x{} out of range for p = {p}",
                        h + 1
                    )));
                }
                Ok(())
            }
            SymbolicTree::Unary(op, c) => {
                check_op(*op, Arity::Unary, ops)?;
                c.validate(p, ops)
            }
            SymbolicTree::Binary(op, l, r) => {
                check_op(*op, Arity::Binary, ops)?;
                l.validate(p, ops)?;
                r.validate(p, ops)
            }
        }
    }

    /// Evaluates the expression at one row. Non-finite results (division by
    /// zero, overflow) are returned as-is.
    pub fn evaluate(&self, row: &[f64]) -> Result<f64> {
        if self.max_feature() >= row.len() {
            return Err(Error::Structure(format!(
                "feature x{} out of range for p = {}",
                self.max_feature() + 1,
                row.len()
            )));
        }
        Ok(self.eval_unchecked(row))
    }

    fn eval_unchecked(&self, row: &[f64]) -> f64 {
        match self {
            SymbolicTree::Terminal(h) => row[*h],
            SymbolicTree::Unary(op, c) => op.apply_unary(c.eval_unchecked(row)),
            SymbolicTree::Binary(op, l, r) => {
                op.apply_binary(l.eval_unchecked(row), r.eval_unchecked(row))
            }
        }
    }

    /// Evaluates over feature columns (each of equal length n).
    pub fn evaluate_columns(&self, columns: &[Vec<f64>]) -> Result<ColumnEval> {
        if self.max_feature() >= columns.len() {
            return Err(Error::Structure(format!(
                "feature x{} out of range for p = {}",
                self.max_feature() + 1,
                columns.len()
            )));
        }
        let values = self.eval_columns_unchecked(columns);
        let finite = values.iter().all(|v| v.is_finite());
        Ok(ColumnEval { values, finite })
    }

    fn eval_columns_unchecked(&self, columns: &[Vec<f64>]) -> Vec<f64> {
        match self {
            SymbolicTree::Terminal(h) => columns[*h].clone(),
            SymbolicTree::Unary(op, c) => {
                let mut v = c.eval_columns_unchecked(columns);
                v.iter_mut().for_each(|x| *x = op.apply_unary(*x));
                v
            }
            SymbolicTree::Binary(op, l, r) => {
                let mut a = l.eval_columns_unchecked(columns);
                let b = r.eval_columns_unchecked(columns);
                a.iter_mut()
                    .zip(&b)
                    .for_each(|(x, y)| *x = op.apply_binary(*x, *y));
                a
            }
        }
    }

    /// Operator, feature and per-depth node counts.
    pub fn summarize(&self, ops: &OperatorSet, p: usize) -> Result<TreeSummary> {
        let depth = self.depth();
        let mut summary = TreeSummary {
            xi: vec![0; ops.len()],
            rho: vec![0; p],
            nonterminals_by_depth: vec![0; depth + 1],
            terminals_by_depth: vec![0; depth + 1],
        };
        self.accumulate(ops, 0, &mut summary)?;
        Ok(summary)
    }

    fn accumulate(&self, ops: &OperatorSet, depth: usize, s: &mut TreeSummary) -> Result<()> {
        match self {
            SymbolicTree::Terminal(h) => {
                let slot = s.rho.get_mut(*h).ok_or_else(|| {
                    Error::Structure(format!("feature x{} out of range", h + 1))
                })?;
                *slot += 1;
                s.terminals_by_depth[depth] += 1;
            }
            SymbolicTree::Unary(op, c) => {
                s.xi[op_index(*op, ops)?] += 1;
                s.nonterminals_by_depth[depth] += 1;
                c.accumulate(ops, depth + 1, s)?;
            }
            SymbolicTree::Binary(op, l, r) => {
                s.xi[op_index(*op, ops)?] += 1;
                s.nonterminals_by_depth[depth] += 1;
                l.accumulate(ops, depth + 1, s)?;
                r.accumulate(ops, depth + 1, s)?;
            }
        }
        Ok(())
    }

    /// Fully parenthesized infix rendering, e.g. `((x1+x2)*x3)`.
    pub fn canonical_string(&self) -> String {
        let mut out = String::new();
        self.write_canonical(&mut out);
        out
    }

    fn write_canonical(&self, out: &mut String) {
        match self {
            SymbolicTree::Terminal(h) => {
                out.push('x');
                out.push_str(&(h + 1).to_string());
            }
            SymbolicTree::Unary(op, c) => {
                out.push_str(op.name());
                out.push('(');
                c.write_canonical(out);
                out.push(')');
            }
            SymbolicTree::Binary(op, l, r) => {
                out.push('(');
                l.write_canonical(out);
                out.push(match op {
                    Operator::Add => '+',
                    _ => '*',
                });
                r.write_canonical(out);
                out.push(')');
            }
        }
    }

    /// Sorts operands of commutative operators by their canonical strings,
    /// recursively. Idempotent.
    pub fn canonical_ordered(&self) -> SymbolicTree {
        self.ordered_with_key().0
    }

    fn ordered_with_key(&self) -> (SymbolicTree, String) {
        match self {
            SymbolicTree::Terminal(_) => (self.clone(), self.canonical_string()),
            SymbolicTree::Unary(op, c) => {
                let (child, key) = c.ordered_with_key();
                let key = format!("{}({})", op.name(), key);
                (SymbolicTree::Unary(*op, Box::new(child)), key)
            }
            SymbolicTree::Binary(op, l, r) => {
                let (mut lt, mut lk) = l.ordered_with_key();
                let (mut rt, mut rk) = r.ordered_with_key();
                if op.is_commutative() && operand_order(&lk, &rk) == Ordering::Greater {
                    std::mem::swap(&mut lt, &mut rt);
                    std::mem::swap(&mut lk, &mut rk);
                }
                let sym = if *op == Operator::Add { '+' } else { '*' };
                let key = format!("({lk}{sym}{rk})");
                (SymbolicTree::Binary(*op, Box::new(lt), Box::new(rt)), key)
            }
        }
    }

    /// All nodes in preorder with their depths.
    pub fn sites(&self) -> Vec<NodeSite> {
        let mut out = Vec::with_capacity(self.node_count());
        self.collect_sites(0, &mut out);
        out
    }

    fn collect_sites(&self, depth: usize, out: &mut Vec<NodeSite>) {
        out.push(NodeSite {
            index: out.len(),
            depth,
            terminal: self.is_terminal(),
        });
        match self {
            SymbolicTree::Terminal(_) => {}
            SymbolicTree::Unary(_, c) => c.collect_sites(depth + 1, out),
            SymbolicTree::Binary(_, l, r) => {
                l.collect_sites(depth + 1, out);
                r.collect_sites(depth + 1, out);
            }
        }
    }

    pub fn terminal_sites(&self) -> Vec<NodeSite> {
        self.sites().into_iter().filter(|s| s.terminal).collect()
    }

    pub fn nonterminal_sites(&self) -> Vec<NodeSite> {
        self.sites().into_iter().filter(|s| !s.terminal).collect()
    }

    /// Subtree rooted at the preorder index.
    pub fn subtree(&self, index: usize) -> Option<&SymbolicTree> {
        let mut counter = 0;
        self.find(index, &mut counter)
    }

    fn find(&self, index: usize, counter: &mut usize) -> Option<&SymbolicTree> {
        if *counter == index {
            return Some(self);
        }
        *counter += 1;
        match self {
            SymbolicTree::Terminal(_) => None,
            SymbolicTree::Unary(_, c) => c.find(index, counter),
            SymbolicTree::Binary(_, l, r) => {
                l.find(index, counter).or_else(|| r.find(index, counter))
            }
        }
    }

    /// Copy of the tree with the subtree at `index` replaced.
    pub fn replace_subtree(&self, index: usize, replacement: SymbolicTree) -> Option<SymbolicTree> {
        let mut counter = 0;
        let mut slot = Some(replacement);
        let out = self.rebuild(index, &mut counter, &mut slot);
        if slot.is_some() {
            None
        } else {
            Some(out)
        }
    }

    fn rebuild(
        &self,
        index: usize,
        counter: &mut usize,
        slot: &mut Option<SymbolicTree>,
    ) -> SymbolicTree {
        if *counter == index {
            if let Some(rep) = slot.take() {
                *counter += self.node_count();
                return rep;
            }
        }
        *counter += 1;
        match self {
            SymbolicTree::Terminal(h) => SymbolicTree::Terminal(*h),
            SymbolicTree::Unary(op, c) => {
                SymbolicTree::Unary(*op, Box::new(c.rebuild(index, counter, slot)))
            }
            SymbolicTree::Binary(op, l, r) => {
                let l = l.rebuild(index, counter, slot);
                let r = r.rebuild(index, counter, slot);
                SymbolicTree::Binary(*op, Box::new(l), Box::new(r))
            }
        }
    }
}

impl fmt::Display for SymbolicTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_string())
    }
}

/// Operand order for commutative operators: canonical strings compared with
/// parentheses ignored, full strings as the tie-break.
fn operand_order(a: &str, b: &str) -> Ordering {
    let stripped = |s: &str| s.chars().filter(|c| *c != '(' && *c != ')').collect::<String>();
    stripped(a).cmp(&stripped(b)).then_with(|| a.cmp(b))
}

fn op_index(op: Operator, ops: &OperatorSet) -> Result<usize> {
    ops.index_of(op)
        .ok_or_else(|| Error::Structure(format!("operator `{op}` is not in the operator set")))
}

fn check_op(op: Operator, arity: Arity, ops: &OperatorSet) -> Result<()> {
    if op.arity() != arity {
        return Err(Error::Structure(format!("operator `{op}` has the wrong arity")));
    }
    op_index(op, ops).map(|_| ())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: usize) -> SymbolicTree {
        SymbolicTree::x(i)
    }

    fn un(op: Operator, c: SymbolicTree) -> SymbolicTree {
        SymbolicTree::unary(op, c)
    }

    #[test]
    fn evaluate_examples() {
        let t = SymbolicTree::mul(SymbolicTree::add(x(1), x(2)), x(3));
        assert_eq!(t.evaluate(&[1.0, 2.0, 3.0]).unwrap(), 9.0);
        assert_eq!(un(Operator::Exp, x(1)).evaluate(&[0.0, 5.0]).unwrap(), 1.0);
        assert!(!un(Operator::Inv, x(1)).evaluate(&[0.0]).unwrap().is_finite());
        assert!(matches!(x(4).evaluate(&[1.0, 2.0]), Err(Error::Structure(_))));
    }

    #[test]
    fn evaluate_column_examples() {
        let cols = vec![vec![1.0, 2.0, 3.0]];
        assert_eq!(x(1).evaluate_columns(&cols).unwrap().values, vec![1.0, 2.0, 3.0]);
        let sq = un(Operator::Pow2, x(1)).evaluate_columns(&cols).unwrap();
        assert_eq!(sq.values, vec![1.0, 4.0, 9.0]);
        assert!(sq.finite);
        let cols2 = vec![vec![0.0, 0.0], vec![5.0, 6.0]];
        assert_eq!(
            un(Operator::Neg, x(2)).evaluate_columns(&cols2).unwrap().values,
            vec![-5.0, -6.0]
        );
        assert!(!un(Operator::Inv, x(1)).evaluate_columns(&cols2).unwrap().finite);
    }

    #[test]
    fn summarize_examples() {
        let ops = OperatorSet::default();
        let s = x(1).summarize(&ops, 3).unwrap();
        assert!(s.xi.iter().all(|&c| c == 0));
        assert_eq!(s.rho, vec![1, 0, 0]);
        assert_eq!(s.terminals_by_depth, vec![1]);

        let s = SymbolicTree::add(x(1), x(2)).summarize(&ops, 2).unwrap();
        assert_eq!(s.xi[ops.index_of(Operator::Add).unwrap()], 1);
        assert_eq!(s.rho, vec![1, 1]);
        assert_eq!(s.nonterminals_by_depth, vec![1, 0]);
        assert_eq!(s.terminals_by_depth, vec![0, 2]);

        let t = un(Operator::Sin, SymbolicTree::add(x(1), x(2)));
        let s = t.summarize(&ops, 2).unwrap();
        assert_eq!(s.xi[ops.index_of(Operator::Sin).unwrap()], 1);
        assert_eq!(s.xi[ops.index_of(Operator::Add).unwrap()], 1);
        assert_eq!(s.size(), 2);
        assert_eq!(t.depth(), 2);
    }

    #[test]
    fn summarize_rejects_foreign_operator() {
        let ops = OperatorSet::from_names("add,mul").unwrap();
        assert!(un(Operator::Sin, x(1)).summarize(&ops, 1).is_err());
    }

    #[test]
    fn canonical_strings() {
        let t = SymbolicTree::mul(SymbolicTree::add(x(1), x(2)), x(3));
        assert_eq!(t.canonical_string(), "((x1+x2)*x3)");
        assert_eq!(un(Operator::Exp, x(1)).canonical_string(), "exp(x1)");
        assert_eq!(x(4).canonical_string(), "x4");
    }

    #[test]
    fn canonical_ordering_examples() {
        let t = SymbolicTree::mul(x(3), x(2));
        assert_eq!(t.canonical_ordered().canonical_string(), "(x2*x3)");
        let t = SymbolicTree::add(x(1), x(2));
        assert_eq!(t.canonical_ordered().canonical_string(), "(x1+x2)");
        let t = SymbolicTree::add(SymbolicTree::mul(x(2), x(1)), un(Operator::Exp, x(1)));
        assert_eq!(t.canonical_ordered().canonical_string(), "(exp(x1)+(x1*x2))");
        // ties on the stripped key fall back to the full string
        let a = SymbolicTree::mul(SymbolicTree::add(x(1), x(2)), x(3));
        let b = SymbolicTree::add(x(1), SymbolicTree::mul(x(2), x(3)));
        let ab = SymbolicTree::add(a.clone(), b.clone()).canonical_ordered();
        let ba = SymbolicTree::add(b, a).canonical_ordered();
        assert_eq!(ab, ba);
    }

    #[test]
    fn sites_and_replacement() {
        let t = SymbolicTree::mul(SymbolicTree::add(x(1), x(2)), x(3));
        let sites = t.sites();
        assert_eq!(sites.len(), 5);
        assert_eq!(t.terminal_sites().iter().map(|s| s.index).collect::<Vec<_>>(), vec![2, 3, 4]);
        assert_eq!(t.subtree(1).unwrap().canonical_string(), "(x1+x2)");
        let r = t.replace_subtree(1, x(2)).unwrap();
        assert_eq!(r.canonical_string(), "(x2*x3)");
        let r = t.replace_subtree(4, un(Operator::Sin, x(1))).unwrap();
        assert_eq!(r.canonical_string(), "((x1+x2)*sin(x1))");
        assert!(t.replace_subtree(9, x(1)).is_none());
    }

    #[test]
    fn operator_set_validation() {
        assert!(OperatorSet::new(vec![]).is_err());
        assert!(OperatorSet::new(vec![Operator::Add, Operator::Add]).is_err());
        assert!(matches!(
            OperatorSet::from_names("add,log"),
            Err(Error::UnknownOperator(_))
        ));
        assert_eq!(OperatorSet::default().len(), 9);
    }
}

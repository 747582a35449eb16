//! Minimal reverse-mode tape.
//!
//! Nodes are appended in evaluation order, so parents always precede their
//! children and a single reverse sweep propagates adjoints.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::scalar::Scalar;

#[derive(Default)]
struct Nodes {
    /// `(first, len)` into `edges` for each node.
    spans: Vec<(u32, u32)>,
    /// `(parent, local partial)`.
    edges: Vec<(u32, f64)>,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Nodes>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("len", &self.len()).finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, parents: &[(usize, f64)]) -> usize {
        let mut n = self.nodes.borrow_mut();
        let first = n.edges.len() as u32;
        n.edges.extend(parents.iter().map(|&(p, d)| (p as u32, d)));
        let id = n.spans.len();
        n.spans.push((first, parents.len() as u32));
        id
    }

    /// A leaf that gradients are reported for.
    pub fn var(&self, value: f64) -> DiffScalar<'_> {
        DiffScalar {
            tape: self,
            id: self.push(&[]),
            value,
        }
    }

    /// Adjoints of every node with respect to `output`.
    pub fn backward(&self, output: DiffScalar<'_>) -> Adjoints {
        assert!(
            std::ptr::eq(self, output.tape),
            "output belongs to another tape"
        );
        let n = self.nodes.borrow();
        let mut adj = vec![0.0; n.spans.len()];
        adj[output.id] = 1.0;
        for id in (0..=output.id).rev() {
            let a = adj[id];
            if a == 0.0 {
                continue;
            }
            let (first, len) = n.spans[id];
            for &(p, d) in &n.edges[first as usize..(first + len) as usize] {
                adj[p as usize] += a * d;
            }
        }
        Adjoints { adj }
    }
}

#[derive(Debug, Clone)]
pub struct Adjoints {
    adj: Vec<f64>,
}

impl Adjoints {
    pub fn wrt(&self, x: DiffScalar<'_>) -> f64 {
        self.adj[x.id]
    }
}

/// A value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct DiffScalar<'t> {
    tape: &'t Tape,
    id: usize,
    value: f64,
}

impl fmt::Debug for DiffScalar<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DiffScalar(#{} = {})", self.id, self.value)
    }
}

impl<'t> DiffScalar<'t> {
    pub fn node_id(&self) -> usize {
        self.id
    }

    fn unary(self, value: f64, d: f64) -> Self {
        DiffScalar {
            tape: self.tape,
            id: self.tape.push(&[(self.id, d)]),
            value,
        }
    }

    fn binary(self, other: Self, value: f64, da: f64, db: f64) -> Self {
        debug_assert!(std::ptr::eq(self.tape, other.tape));
        DiffScalar {
            tape: self.tape,
            id: self.tape.push(&[(self.id, da), (other.id, db)]),
            value,
        }
    }
}

impl<'t> Add for DiffScalar<'t> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        self.binary(o, self.value + o.value, 1.0, 1.0)
    }
}

impl<'t> Sub for DiffScalar<'t> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.binary(o, self.value - o.value, 1.0, -1.0)
    }
}

impl<'t> Mul for DiffScalar<'t> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.binary(o, self.value * o.value, o.value, self.value)
    }
}

impl<'t> Div for DiffScalar<'t> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.value / o.value;
        self.binary(o, q, 1.0 / o.value, -q / o.value)
    }
}

impl<'t> Neg for DiffScalar<'t> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.value, -1.0)
    }
}

impl<'t> Add<f64> for DiffScalar<'t> {
    type Output = Self;
    fn add(self, c: f64) -> Self {
        self.unary(self.value + c, 1.0)
    }
}

impl<'t> Sub<f64> for DiffScalar<'t> {
    type Output = Self;
    fn sub(self, c: f64) -> Self {
        self.unary(self.value - c, 1.0)
    }
}

impl<'t> Mul<f64> for DiffScalar<'t> {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        self.unary(self.value * c, c)
    }
}

impl<'t> Scalar for DiffScalar<'t> {
    const TRACKED: bool = true;

    fn value(&self) -> f64 {
        self.value
    }

    fn constant_like(&self, value: f64) -> Self {
        DiffScalar {
            tape: self.tape,
            id: self.tape.push(&[]),
            value,
        }
    }

    fn sin(self) -> Self {
        self.unary(self.value.sin(), self.value.cos())
    }

    fn cos(self) -> Self {
        self.unary(self.value.cos(), -self.value.sin())
    }

    fn custom(value: f64, parents: &[(Self, f64)]) -> Self {
        let tape = parents.first().expect("custom node needs a parent").0.tape;
        let edges: Vec<(usize, f64)> = parents.iter().map(|(p, d)| (p.id, *d)).collect();
        DiffScalar {
            tape,
            id: tape.push(&edges),
            value,
        }
    }
}

use std::fmt;

/// Projector `Π_{outcome|input}` of one party.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Projector {
    pub input: usize,
    pub outcome: usize,
}

/// A product of projectors with every Alice operator to the left of every
/// Bob operator. Parties commute, so this is the only ordering that matters.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Word {
    a: Vec<Projector>,
    b: Vec<Projector>,
}

/// Reduces one party's product in place. Returns `false` if it vanishes.
fn reduce_party(ops: &[Projector]) -> Option<Vec<Projector>> {
    let mut stack: Vec<Projector> = Vec::with_capacity(ops.len());
    for &op in ops {
        match stack.last() {
            Some(top) if top.input == op.input => {
                if top.outcome != op.outcome {
                    return None;
                }
            }
            _ => stack.push(op),
        }
    }
    Some(stack)
}

impl Word {
    pub fn identity() -> Self {
        Word::default()
    }

    /// Builds and canonicalizes a word; `None` if the product is zero.
    pub fn new(a: &[Projector], b: &[Projector]) -> Option<Self> {
        Some(Word { a: reduce_party(a)?, b: reduce_party(b)? })
    }

    pub fn alice(input: usize, outcome: usize) -> Self {
        Word { a: vec![Projector { input, outcome }], b: Vec::new() }
    }

    pub fn bob(input: usize, outcome: usize) -> Self {
        Word { a: Vec::new(), b: vec![Projector { input, outcome }] }
    }

    pub fn alice_part(&self) -> &[Projector] {
        &self.a
    }

    pub fn bob_part(&self) -> &[Projector] {
        &self.b
    }

    pub fn len(&self) -> usize {
        self.a.len() + self.b.len()
    }

    pub fn is_identity(&self) -> bool {
        self.a.is_empty() && self.b.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.is_identity()
    }

    /// Re-applies the reduction rules; a no-op on words built through this API.
    pub fn canonical(&self) -> Option<Self> {
        Word::new(&self.a, &self.b)
    }

    /// Product `self * other`; `None` if it vanishes.
    pub fn mul(&self, other: &Word) -> Option<Word> {
        let a: Vec<Projector> = self.a.iter().chain(&other.a).copied().collect();
        let b: Vec<Projector> = self.b.iter().chain(&other.b).copied().collect();
        Word::new(&a, &b)
    }

    pub fn adjoint(&self) -> Word {
        Word { a: self.a.iter().rev().copied().collect(), b: self.b.iter().rev().copied().collect() }
    }

    /// Representative shared by a word and its adjoint; with real moments both have the same expectation.
    pub fn moment_key(&self) -> Word {
        let adj = self.adjoint();
        if adj < *self {
            adj
        } else {
            self.clone()
        }
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_identity() {
            return f.write_str("1");
        }
        let mut first = true;
        for (name, ops) in [("A", &self.a), ("B", &self.b)] {
            for p in ops {
                if !first {
                    f.write_str(" ")?;
                }
                first = false;
                write!(f, "{name}{}|{}", p.outcome, p.input)?;
            }
        }
        Ok(())
    }
}

/// All canonical single-party products of exactly `len` projectors drawn from
/// the non-eliminated outcomes (`outputs - 1` per input).
pub(crate) fn party_products(inputs: usize, outputs: usize, len: usize) -> Vec<Vec<Projector>> {
    let ops: Vec<Projector> = (0..inputs)
        .flat_map(|input| (0..outputs.saturating_sub(1)).map(move |outcome| Projector { input, outcome }))
        .collect();
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        let mut next = Vec::new();
        for prefix in &out {
            for &op in &ops {
                if prefix.last().is_none_or(|last: &Projector| last.input != op.input) {
                    let mut w = prefix.clone();
                    w.push(op);
                    next.push(w);
                }
            }
        }
        out = next;
    }
    out
}

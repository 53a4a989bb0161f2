//! Mazurkiewicz trace theory over finite alphabets.
//!
//! A [`DependencyRelation`] is a finite, reflexive and symmetric relation on
//! letters; its complement over the domain is the [`IndependencyRelation`].
//! Two words are equivalent when one can be turned into the other by
//! repeatedly swapping adjacent independent letters, and a [`TraceClass`]
//! is one such equivalence class.
//!
//! The generic helpers [`swap_closure`] and [`lex_normal_form`] work over any
//! ordered item type with an independence predicate; the explorer reuses
//! them to quotient recorded executions.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

/// Default upper bound on the word length accepted by [`enumerate_trace_class`].
pub const DEFAULT_MAX_LEN: usize = 12;

pub type Letter = char;
pub type LetterPair = (Letter, Letter);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("dependency relation is not closed: missing {}", render_pairs(.missing))]
    Validation { missing: Vec<LetterPair> },
    #[error("independency relation is invalid: {0}")]
    Independency(String),
    #[error("letter '{letter}' is outside the relation domain {{{}}}", render_letters(.domain))]
    Domain {
        letter: Letter,
        domain: BTreeSet<Letter>,
    },
    #[error("word of length {len} exceeds the enumeration guard of {max}")]
    Size { len: usize, max: usize },
}

fn render_pairs(pairs: &[LetterPair]) -> String {
    pairs
        .iter()
        .map(|(a, b)| format!("({a},{b})"))
        .collect::<Vec<_>>()
        .join(",")
}

fn render_letters(letters: &BTreeSet<Letter>) -> String {
    letters
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// A finite reflexive, symmetric relation over its own domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyRelation {
    domain: BTreeSet<Letter>,
    pairs: BTreeSet<LetterPair>,
}

impl DependencyRelation {
    /// Validates `pairs` as a dependency relation. The domain is the set of
    /// letters mentioned by the pairs.
    pub fn new(pairs: impl IntoIterator<Item = LetterPair>) -> Result<Self, TraceError> {
        let pairs: BTreeSet<LetterPair> = pairs.into_iter().collect();
        let domain: BTreeSet<Letter> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();

        let mut missing = BTreeSet::new();
        for &(a, b) in &pairs {
            if !pairs.contains(&(b, a)) {
                missing.insert((b, a));
            }
        }
        for &a in &domain {
            if !pairs.contains(&(a, a)) {
                missing.insert((a, a));
            }
        }
        if !missing.is_empty() {
            return Err(TraceError::Validation {
                missing: missing.into_iter().collect(),
            });
        }
        Ok(Self { domain, pairs })
    }

    /// Union of full relations `C × C` over each clique, e.g. `{a,b}² ∪ {a,c}²`.
    pub fn from_cliques<I, C>(cliques: I) -> Self
    where
        I: IntoIterator<Item = C>,
        C: AsRef<[Letter]>,
    {
        let mut pairs = BTreeSet::new();
        for clique in cliques {
            let clique = clique.as_ref();
            for &a in clique {
                for &b in clique {
                    pairs.insert((a, b));
                }
            }
        }
        Self::new(pairs).expect("clique products are reflexive and symmetric")
    }

    pub fn domain(&self) -> &BTreeSet<Letter> {
        &self.domain
    }

    pub fn pairs(&self) -> &BTreeSet<LetterPair> {
        &self.pairs
    }

    pub fn contains(&self, a: Letter, b: Letter) -> bool {
        self.pairs.contains(&(a, b))
    }

    /// `I_D = (Σ_D × Σ_D) − D`.
    pub fn independency(&self) -> IndependencyRelation {
        derive_independency(self)
    }
}

/// A symmetric, irreflexive relation naming which letters may be swapped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndependencyRelation {
    domain: BTreeSet<Letter>,
    pairs: BTreeSet<LetterPair>,
}

impl IndependencyRelation {
    /// Builds an independency over an explicit domain. Every pair must lie in
    /// the domain; the relation must be symmetric and irreflexive.
    pub fn new(
        domain: impl IntoIterator<Item = Letter>,
        pairs: impl IntoIterator<Item = LetterPair>,
    ) -> Result<Self, TraceError> {
        let domain: BTreeSet<Letter> = domain.into_iter().collect();
        let pairs: BTreeSet<LetterPair> = pairs.into_iter().collect();
        for &(a, b) in &pairs {
            for letter in [a, b] {
                if !domain.contains(&letter) {
                    return Err(TraceError::Domain {
                        letter,
                        domain: domain.clone(),
                    });
                }
            }
            if a == b {
                return Err(TraceError::Independency(format!(
                    "({a},{a}) is reflexive; a letter never commutes with itself"
                )));
            }
            if !pairs.contains(&(b, a)) {
                return Err(TraceError::Independency(format!(
                    "({a},{b}) present without ({b},{a})"
                )));
            }
        }
        Ok(Self { domain, pairs })
    }

    /// The empty relation over `domain`: nothing commutes.
    pub fn empty(domain: impl IntoIterator<Item = Letter>) -> Self {
        Self {
            domain: domain.into_iter().collect(),
            pairs: BTreeSet::new(),
        }
    }

    pub fn domain(&self) -> &BTreeSet<Letter> {
        &self.domain
    }

    pub fn pairs(&self) -> &BTreeSet<LetterPair> {
        &self.pairs
    }

    pub fn independent(&self, a: Letter, b: Letter) -> bool {
        self.pairs.contains(&(a, b))
    }

    fn check_word(&self, word: &str) -> Result<Vec<Letter>, TraceError> {
        word.chars()
            .map(|letter| {
                if self.domain.contains(&letter) {
                    Ok(letter)
                } else {
                    Err(TraceError::Domain {
                        letter,
                        domain: self.domain.clone(),
                    })
                }
            })
            .collect()
    }
}

impl fmt::Display for IndependencyRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", render_pairs(&self.pairs.iter().copied().collect::<Vec<_>>()))
    }
}

/// Checks `pairs` for reflexivity and symmetry and returns the relation.
pub fn validate_dependency(
    pairs: impl IntoIterator<Item = LetterPair>,
) -> Result<DependencyRelation, TraceError> {
    DependencyRelation::new(pairs)
}

pub fn derive_independency(dependency: &DependencyRelation) -> IndependencyRelation {
    let mut pairs = BTreeSet::new();
    for &a in &dependency.domain {
        for &b in &dependency.domain {
            if !dependency.contains(a, b) {
                pairs.insert((a, b));
            }
        }
    }
    IndependencyRelation {
        domain: dependency.domain.clone(),
        pairs,
    }
}

/// One equivalence class of words under adjacent independent swaps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceClass {
    pub members: BTreeSet<String>,
    pub representative: String,
}

impl TraceClass {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.members.contains(word)
    }
}

/// Decides trace equivalence of `u` and `v`.
///
/// Uses the projection characterization: two words are equivalent iff their
/// projections onto every dependent pair of letters `{a, b}` coincide. This
/// is independent of the breadth-first closure used for enumeration.
pub fn are_equivalent(u: &str, v: &str, independency: &IndependencyRelation) -> Result<bool, TraceError> {
    let u = independency.check_word(u)?;
    let v = independency.check_word(v)?;
    if u.len() != v.len() {
        return Ok(false);
    }
    let letters: BTreeSet<Letter> = u.iter().chain(v.iter()).copied().collect();
    for &a in &letters {
        for &b in &letters {
            if a > b || independency.independent(a, b) {
                continue;
            }
            let project = |w: &[Letter]| -> Vec<Letter> {
                w.iter().copied().filter(|&c| c == a || c == b).collect()
            };
            if project(&u) != project(&v) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Enumerates `[w]` by breadth-first closure under single adjacent swaps.
pub fn enumerate_trace_class(
    word: &str,
    independency: &IndependencyRelation,
    max_len: usize,
) -> Result<TraceClass, TraceError> {
    let letters = independency.check_word(word)?;
    if letters.len() > max_len {
        return Err(TraceError::Size {
            len: letters.len(),
            max: max_len,
        });
    }
    let closure = swap_closure(&letters, |&a, &b| independency.independent(a, b));
    let members: BTreeSet<String> = closure.into_iter().map(|w| w.into_iter().collect()).collect();
    let representative = members
        .iter()
        .next()
        .cloned()
        .unwrap_or_default();
    Ok(TraceClass {
        members,
        representative,
    })
}

/// All words reachable from `word` by swapping adjacent independent items.
pub fn swap_closure<T, F>(word: &[T], independent: F) -> BTreeSet<Vec<T>>
where
    T: Clone + Ord,
    F: Fn(&T, &T) -> bool,
{
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(word.to_vec());
    queue.push_back(word.to_vec());
    while let Some(current) = queue.pop_front() {
        for i in 1..current.len() {
            if independent(&current[i - 1], &current[i]) {
                let mut next = current.clone();
                next.swap(i - 1, i);
                if !seen.contains(&next) {
                    seen.insert(next.clone());
                    queue.push_back(next);
                }
            }
        }
    }
    seen
}

/// Returns the positions of `word` in the order of the lexicographically
/// least member of its trace class, comparing items by `key`.
///
/// Greedy topological sort of the dependence order (`i` precedes `j` when
/// `i < j` and the items are dependent), always taking the smallest ready
/// item. Equal output means equal class, so the result is a class invariant.
pub fn lex_normal_form<'a, T, K, FK, FI>(word: &'a [T], key: FK, independent: FI) -> Vec<usize>
where
    K: Ord,
    FK: Fn(&'a T) -> K,
    FI: Fn(&T, &T) -> bool,
{
    let n = word.len();
    let mut blockers = vec![0usize; n];
    let mut successors = vec![Vec::new(); n];
    for j in 0..n {
        for i in 0..j {
            if !independent(&word[i], &word[j]) {
                blockers[j] += 1;
                successors[i].push(j);
            }
        }
    }
    let keys: Vec<K> = word.iter().map(&key).collect();
    let mut ready: BTreeSet<(&K, usize)> = (0..n)
        .filter(|&i| blockers[i] == 0)
        .map(|i| (&keys[i], i))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(first) = ready.iter().next().copied() {
        ready.remove(&first);
        let i = first.1;
        order.push(i);
        for &j in &successors[i] {
            blockers[j] -= 1;
            if blockers[j] == 0 {
                ready.insert((&keys[j], j));
            }
        }
    }
    order
}

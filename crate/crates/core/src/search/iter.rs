//! Streaming evaluation over ordinals. Every iterator yields ascending
//! ordinals, so conjunctions leapfrog and disjunctions k-way merge.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io;

use super::index::{PartitionIndex, PostingStream};
use super::query::Query;

pub trait DocIter {
    /// Current ordinal, `None` once exhausted.
    fn doc(&self) -> Option<u32>;
    fn next(&mut self) -> io::Result<Option<u32>>;
    /// Moves to the first ordinal ≥ `target`.
    fn seek(&mut self, target: u32) -> io::Result<Option<u32>> {
        while self.doc().is_some_and(|d| d < target) {
            self.next()?;
        }
        Ok(self.doc())
    }
}

struct Empty;

impl DocIter for Empty {
    fn doc(&self) -> Option<u32> {
        None
    }
    fn next(&mut self) -> io::Result<Option<u32>> {
        Ok(None)
    }
}

struct Range {
    cur: u32,
    end: u32,
}

impl DocIter for Range {
    fn doc(&self) -> Option<u32> {
        (self.cur < self.end).then_some(self.cur)
    }
    fn next(&mut self) -> io::Result<Option<u32>> {
        self.cur = self.cur.saturating_add(1).min(self.end);
        Ok(self.doc())
    }
    fn seek(&mut self, target: u32) -> io::Result<Option<u32>> {
        self.cur = self.cur.max(target).min(self.end);
        Ok(self.doc())
    }
}

pub(crate) struct TermIter {
    stream: PostingStream,
    doc: Option<u32>,
    positions: Vec<u32>,
}

impl TermIter {
    fn new(mut stream: PostingStream) -> io::Result<TermIter> {
        let mut positions = Vec::new();
        let doc = stream.next_doc(&mut positions)?;
        Ok(TermIter { stream, doc, positions })
    }
}

impl DocIter for TermIter {
    fn doc(&self) -> Option<u32> {
        self.doc
    }
    fn next(&mut self) -> io::Result<Option<u32>> {
        if self.doc.is_some() {
            self.doc = self.stream.next_doc(&mut self.positions)?;
        }
        Ok(self.doc)
    }
}

/// Brings every child to a common ordinal; returns it, or `None` when any child runs out.
fn leapfrog<I: DocIter + ?Sized>(children: &mut [Box<I>]) -> io::Result<Option<u32>> {
    let Some(mut target) = children.iter().map(|c| c.doc()).try_fold(0u32, |m, d| d.map(|d| m.max(d))) else {
        return Ok(None);
    };
    loop {
        let mut agreed = true;
        for c in children.iter_mut() {
            match c.seek(target)? {
                None => return Ok(None),
                Some(d) if d > target => {
                    target = d;
                    agreed = false;
                }
                Some(_) => {}
            }
        }
        if agreed {
            return Ok(Some(target));
        }
    }
}

struct And {
    children: Vec<Box<dyn DocIter>>,
    doc: Option<u32>,
}

impl And {
    fn new(children: Vec<Box<dyn DocIter>>) -> io::Result<And> {
        let mut it = And { children, doc: None };
        it.doc = leapfrog(&mut it.children)?;
        Ok(it)
    }
}

impl DocIter for And {
    fn doc(&self) -> Option<u32> {
        self.doc
    }
    fn next(&mut self) -> io::Result<Option<u32>> {
        if let Some(d) = self.doc {
            self.children[0].seek(d + 1)?;
            self.doc = leapfrog(&mut self.children)?;
        }
        Ok(self.doc)
    }
    fn seek(&mut self, target: u32) -> io::Result<Option<u32>> {
        if self.doc.is_some_and(|d| d < target) {
            self.children[0].seek(target)?;
            self.doc = leapfrog(&mut self.children)?;
        }
        Ok(self.doc)
    }
}

struct Or {
    children: Vec<Box<dyn DocIter>>,
    heap: BinaryHeap<Reverse<(u32, usize)>>,
}

impl Or {
    fn new(children: Vec<Box<dyn DocIter>>) -> Or {
        let heap = children.iter().enumerate().filter_map(|(i, c)| c.doc().map(|d| Reverse((d, i)))).collect();
        Or { children, heap }
    }

    fn advance_while(&mut self, mut below: impl FnMut(u32) -> bool, target: u32) -> io::Result<()> {
        while let Some(&Reverse((d, i))) = self.heap.peek() {
            if !below(d) {
                break;
            }
            self.heap.pop();
            let child = &mut self.children[i];
            let next = if target > d { child.seek(target)? } else { child.next()? };
            if let Some(n) = next {
                self.heap.push(Reverse((n, i)));
            }
        }
        Ok(())
    }
}

impl DocIter for Or {
    fn doc(&self) -> Option<u32> {
        self.heap.peek().map(|Reverse((d, _))| *d)
    }
    fn next(&mut self) -> io::Result<Option<u32>> {
        if let Some(cur) = self.doc() {
            self.advance_while(|d| d == cur, 0)?;
        }
        Ok(self.doc())
    }
    fn seek(&mut self, target: u32) -> io::Result<Option<u32>> {
        self.advance_while(|d| d < target, target)?;
        Ok(self.doc())
    }
}

/// Consecutive-position match over term iterators.
struct Phrase {
    terms: Vec<Box<TermIter>>,
    doc: Option<u32>,
}

impl Phrase {
    fn new(terms: Vec<Box<TermIter>>) -> io::Result<Phrase> {
        let mut it = Phrase { terms, doc: None };
        it.doc = it.settle()?;
        Ok(it)
    }

    fn adjacent(&self) -> bool {
        self.terms[0].positions.iter().any(|&p| {
            self.terms[1..]
                .iter()
                .enumerate()
                .all(|(k, t)| t.positions.binary_search(&(p + k as u32 + 1)).is_ok())
        })
    }

    fn settle(&mut self) -> io::Result<Option<u32>> {
        loop {
            let Some(d) = leapfrog(&mut self.terms)? else { return Ok(None) };
            if self.adjacent() {
                return Ok(Some(d));
            }
            self.terms[0].seek(d + 1)?;
        }
    }
}

impl DocIter for Phrase {
    fn doc(&self) -> Option<u32> {
        self.doc
    }
    fn next(&mut self) -> io::Result<Option<u32>> {
        if let Some(d) = self.doc {
            self.terms[0].seek(d + 1)?;
            self.doc = self.settle()?;
        }
        Ok(self.doc)
    }
    fn seek(&mut self, target: u32) -> io::Result<Option<u32>> {
        if self.doc.is_some_and(|d| d < target) {
            self.terms[0].seek(target)?;
            self.doc = self.settle()?;
        }
        Ok(self.doc)
    }
}

fn term_iter(index: &PartitionIndex, term: &str) -> io::Result<Option<Box<TermIter>>> {
    index.term(term).map(|info| TermIter::new(index.postings(info)).map(Box::new)).transpose()
}

/// Compiles `query` into an iterator over `index`.
pub fn compile(index: &PartitionIndex, query: &Query) -> io::Result<Box<dyn DocIter>> {
    Ok(match query {
        Query::Term(t) => match term_iter(index, t)? {
            Some(it) => it,
            None => Box::new(Empty),
        },
        Query::Phrase(tokens) if tokens.len() == 1 => compile(index, &Query::Term(tokens[0].clone()))?,
        Query::Phrase(tokens) => {
            let mut terms = Vec::with_capacity(tokens.len());
            for t in tokens {
                match term_iter(index, t)? {
                    Some(it) => terms.push(it),
                    None => return Ok(Box::new(Empty)),
                }
            }
            Box::new(Phrase::new(terms)?)
        }
        Query::And(children) => {
            let children = children.iter().map(|c| compile(index, c)).collect::<io::Result<Vec<_>>>()?;
            Box::new(And::new(children)?)
        }
        Query::Or(children) => {
            let children = children.iter().map(|c| compile(index, c)).collect::<io::Result<Vec<_>>>()?;
            Box::new(Or::new(children))
        }
        Query::TimeRange(t0, t1) => {
            let (lo, hi) = index.ordinal_range(*t0, *t1)?;
            Box::new(Range { cur: lo, end: hi })
        }
    })
}

/// `query` restricted to timestamps in `[t0, t1]`.
pub fn compile_scoped(index: &PartitionIndex, query: &Query, t0: i64, t1: i64) -> io::Result<Box<dyn DocIter>> {
    let (lo, hi) = index.ordinal_range(t0, t1)?;
    let range = Box::new(Range { cur: lo, end: hi });
    if lo == 0 && hi == index.doc_count() {
        return compile(index, query);
    }
    Ok(Box::new(And::new(vec![range, compile(index, query)?])?))
}

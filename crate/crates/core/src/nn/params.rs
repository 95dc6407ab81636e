//! Flat parameter storage.
//!
//! All trainable parameters live in one contiguous vector, grouped into named
//! sections (one per model component). Layers hold `ParamId` handles and view
//! their slice through the shared layout. This keeps the optimizer, the
//! checkpoint writer, and finite-difference probing trivial.

use std::ops::Range;
use std::sync::Arc;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::num::Scalar;

/// Handle to one named parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

/// How a parameter is filled at build time.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    /// Gaussian with the given standard deviation.
    Normal(f64),
}

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub init: Init,
}

#[derive(Debug, Clone)]
pub struct SectionEntry {
    pub name: String,
    pub range: Range<usize>,
}

/// Immutable description of every parameter tensor in a model.
#[derive(Debug)]
pub struct ParamLayout {
    entries: Vec<ParamEntry>,
    sections: Vec<SectionEntry>,
    total: usize,
}

impl ParamLayout {
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn sections(&self) -> &[SectionEntry] {
        &self.sections
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn section(&self, name: &str) -> Option<&SectionEntry> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn range(&self, id: ParamId) -> Range<usize> {
        let e = &self.entries[id.0];
        e.offset..e.offset + e.shape.iter().product::<usize>()
    }
}

/// Builder that assigns offsets in declaration order.
pub struct LayoutBuilder {
    entries: Vec<ParamEntry>,
    sections: Vec<SectionEntry>,
    cursor: usize,
    section_start: usize,
    section_name: Option<String>,
}

impl LayoutBuilder {
    pub fn new() -> Self {
        LayoutBuilder {
            entries: Vec::new(),
            sections: Vec::new(),
            cursor: 0,
            section_start: 0,
            section_name: None,
        }
    }

    fn close_section(&mut self) {
        if let Some(name) = self.section_name.take() {
            self.sections.push(SectionEntry {
                name,
                range: self.section_start..self.cursor,
            });
        }
    }

    /// Start a new named section; every `param` call until the next
    /// `section` belongs to it.
    pub fn section(&mut self, name: &str) {
        self.close_section();
        self.section_name = Some(name.to_string());
        self.section_start = self.cursor;
    }

    pub fn param(&mut self, name: &str, shape: &[usize], init: Init) -> ParamId {
        assert!(self.section_name.is_some(), "param declared outside a section");
        let id = ParamId(self.entries.len());
        let n: usize = shape.iter().product();
        self.entries.push(ParamEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset: self.cursor,
            init,
        });
        self.cursor += n;
        id
    }

    pub fn finish(mut self) -> ParamLayout {
        self.close_section();
        ParamLayout {
            entries: self.entries,
            sections: self.sections,
            total: self.cursor,
        }
    }
}

impl Default for LayoutBuilder {
    fn default() -> Self {
        Self::new()
    }
}

/// Parameter values backing a layout.
#[derive(Debug, Clone)]
pub struct ParamStore<S: Scalar> {
    pub layout: Arc<ParamLayout>,
    pub data: Vec<S>,
}

/// Box-Muller gaussian; kept local so initialization is identical across
/// platforms for a fixed seed.
fn normal_sample(rng: &mut ChaCha12Rng) -> f64 {
    loop {
        let u1: f64 = rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn zeros(layout: Arc<ParamLayout>) -> Self {
        let data = vec![S::zero(); layout.len()];
        ParamStore { layout, data }
    }

    /// Initialize every entry in declaration order from a seeded stream.
    pub fn init(layout: Arc<ParamLayout>, rng: &mut ChaCha12Rng) -> Self {
        let mut data = vec![S::zero(); layout.len()];
        for entry in layout.entries() {
            let n: usize = entry.shape.iter().product();
            match entry.init {
                Init::Zeros => {}
                Init::Normal(sd) => {
                    for v in &mut data[entry.offset..entry.offset + n] {
                        *v = S::cast(normal_sample(rng) * sd);
                    }
                }
            }
        }
        ParamStore { layout, data }
    }

    pub fn slice(&self, id: ParamId) -> &[S] {
        &self.data[self.layout.range(id)]
    }

    pub fn slice_mut(&mut self, id: ParamId) -> &mut [S] {
        let r = self.layout.range(id);
        &mut self.data[r]
    }

    pub fn view1(&self, id: ParamId) -> ArrayView1<'_, S> {
        let e = self.layout.entry(id);
        debug_assert_eq!(e.shape.len(), 1);
        ArrayView1::from_shape(e.shape[0], self.slice(id)).unwrap()
    }

    pub fn view2(&self, id: ParamId) -> ArrayView2<'_, S> {
        let e = self.layout.entry(id);
        debug_assert_eq!(e.shape.len(), 2);
        ArrayView2::from_shape((e.shape[0], e.shape[1]), self.slice(id)).unwrap()
    }

    pub fn view1_mut(&mut self, id: ParamId) -> ArrayViewMut1<'_, S> {
        let e = self.layout.entry(id);
        let shape = e.shape[0];
        ArrayViewMut1::from_shape(shape, self.slice_mut(id)).unwrap()
    }

    pub fn view2_mut(&mut self, id: ParamId) -> ArrayViewMut2<'_, S> {
        let e = self.layout.entry(id);
        let shape = (e.shape[0], e.shape[1]);
        ArrayViewMut2::from_shape(shape, self.slice_mut(id)).unwrap()
    }
}

/// Gradient accumulator over a window of the parameter vector.
///
/// Per-clip backward passes only touch the backbone prefix of the layout, so
/// workers allocate a window over that range instead of the full vector.
#[derive(Debug, Clone)]
pub struct Grads<S: Scalar> {
    pub lo: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Grads<S> {
    pub fn full(layout: &ParamLayout) -> Self {
        Grads {
            lo: 0,
            data: vec![S::zero(); layout.len()],
        }
    }

    pub fn window(range: Range<usize>) -> Self {
        Grads {
            lo: range.start,
            data: vec![S::zero(); range.end - range.start],
        }
    }

    pub fn slice_mut(&mut self, layout: &ParamLayout, id: ParamId) -> &mut [S] {
        let r = layout.range(id);
        debug_assert!(r.start >= self.lo && r.end - self.lo <= self.data.len());
        &mut self.data[r.start - self.lo..r.end - self.lo]
    }

    pub fn view2_mut(&mut self, layout: &ParamLayout, id: ParamId) -> ArrayViewMut2<'_, S> {
        let e = layout.entry(id);
        let shape = (e.shape[0], e.shape[1]);
        ArrayViewMut2::from_shape(shape, self.slice_mut(layout, id)).unwrap()
    }

    pub fn view1_mut(&mut self, layout: &ParamLayout, id: ParamId) -> ArrayViewMut1<'_, S> {
        let e = layout.entry(id);
        let shape = e.shape[0];
        ArrayViewMut1::from_shape(shape, self.slice_mut(layout, id)).unwrap()
    }

    /// Add `other` into `self`; windows must be compatible.
    pub fn accumulate(&mut self, other: &Grads<S>) {
        debug_assert!(other.lo >= self.lo);
        let off = other.lo - self.lo;
        for (a, b) in self.data[off..off + other.data.len()]
            .iter_mut()
            .zip(other.data.iter())
        {
            *a = *a + *b;
        }
    }
}

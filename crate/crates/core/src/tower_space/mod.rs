//! Exact cutting-and-stacking castles.
//!
//! A castle is a finite list of columns. Each column is a stack of `height`
//! copies of its base, and the base is a list of cells with rational widths.
//! `T` moves a point one level up; from a top level it follows the closing
//! map, which rotates the concatenated base of the point's component by a
//! fixed fraction of its width. Every top point therefore lands in the base,
//! which gives the sojourn-1 property of the junk levels for free.
//!
//! All main columns have height `N` or `N + 1`; the extra top level of an
//! `N + 1` column is junk.

mod refine;
mod runs;
mod set;

use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rational::{self, Rational};

pub use refine::{refine_castle, Lineage, Pool, Strip};
pub use runs::{Run, RunList};
pub use set::{birkhoff_sum, TowerSet};

/// Fraction of the component base width by which the closing map rotates.
/// Its denominator bounds the period of base points from below.
pub const CLOSING_NUM: i64 = 4181;
pub const CLOSING_DEN: i64 = 6765;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub height: u64,
    pub cells: Vec<Rational>,
    pub junk_top: bool,
    pub component: usize,
}

impl Column {
    pub fn width(&self) -> Rational {
        self.cells.iter().fold(Rational::zero(), |a, w| a + w)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    /// Column ids in base order.
    pub columns: Vec<usize>,
    pub base_width: Rational,
    pub shift: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Pt {
    pub column: usize,
    pub level: u64,
    pub cell: usize,
    #[serde(with = "crate::rational::serde_rational")]
    pub offset: Rational,
}

/// Part of a top cell with a single image cell under the closing map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosurePiece {
    pub from_offset: Rational,
    pub width: Rational,
    pub to_column: usize,
    pub to_cell: usize,
    pub to_offset: Rational,
}

#[derive(Debug, Clone)]
pub struct Castle {
    columns: Vec<Column>,
    components: Vec<Component>,
    main_height: u64,
    /// Column-local start of every cell.
    cell_starts: Vec<Vec<Rational>>,
    /// Start of every column inside its component base.
    column_starts: Vec<Rational>,
    /// Per component: (start, column, cell) sorted by start.
    layout: Vec<Vec<(Rational, usize, usize)>>,
    lineage: Option<Lineage>,
}

impl PartialEq for Castle {
    fn eq(&self, other: &Self) -> bool {
        self.columns == other.columns && self.components == other.components && self.main_height == other.main_height
    }
}

impl Castle {
    /// Assembles a castle from columns; component base order follows the
    /// column order.
    pub fn from_columns(columns: Vec<Column>, main_height: u64, lineage: Option<Lineage>) -> Result<Self> {
        let ncomp = columns.iter().map(|c| c.component + 1).max().unwrap_or(0);
        let mut components: Vec<Component> = (0..ncomp)
            .map(|_| Component {
                columns: Vec::new(),
                base_width: Rational::zero(),
                shift: Rational::zero(),
            })
            .collect();
        let mut cell_starts = Vec::with_capacity(columns.len());
        let mut column_starts = Vec::with_capacity(columns.len());
        let mut layout: Vec<Vec<(Rational, usize, usize)>> = vec![Vec::new(); ncomp];
        for (id, col) in columns.iter().enumerate() {
            if col.cells.is_empty() || col.cells.iter().any(|w| w <= &Rational::zero()) {
                return Err(Error::CastleInvariant(format!("column {id} has an empty or non-positive cell")));
            }
            let comp = &mut components[col.component];
            comp.columns.push(id);
            column_starts.push(comp.base_width.clone());
            let mut local = Rational::zero();
            let mut starts = Vec::with_capacity(col.cells.len());
            for (k, w) in col.cells.iter().enumerate() {
                layout[col.component].push((&comp.base_width + &local, id, k));
                starts.push(local.clone());
                local += w;
            }
            comp.base_width += local;
            cell_starts.push(starts);
        }
        for comp in &mut components {
            comp.shift = &comp.base_width * rational::ratio(CLOSING_NUM, CLOSING_DEN);
        }
        Ok(Castle {
            columns,
            components,
            main_height,
            cell_starts,
            column_starts,
            layout,
            lineage,
        })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, id: usize) -> &Column {
        &self.columns[id]
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn main_height(&self) -> u64 {
        self.main_height
    }

    pub fn lineage(&self) -> Option<&Lineage> {
        self.lineage.as_ref()
    }

    pub fn parent(&self) -> Option<&Arc<Castle>> {
        self.lineage.as_ref().map(|l| &l.parent)
    }

    pub fn num_cells(&self) -> usize {
        self.columns.iter().map(|c| c.cells.len()).sum()
    }

    pub fn max_height(&self) -> u64 {
        self.columns.iter().map(|c| c.height).max().unwrap_or(0)
    }

    pub fn cell_start(&self, column: usize, cell: usize) -> &Rational {
        &self.cell_starts[column][cell]
    }

    /// Start of the cell inside its component base.
    pub fn base_position(&self, column: usize, cell: usize) -> Rational {
        &self.column_starts[column] + &self.cell_starts[column][cell]
    }

    pub fn width(&self, column: usize, cell: usize) -> &Rational {
        &self.columns[column].cells[cell]
    }

    pub fn total_measure(&self) -> Rational {
        self.columns
            .iter()
            .fold(Rational::zero(), |acc, c| acc + c.width() * rational::from_u64(c.height))
    }

    /// Measure of the junk set: top levels of the junk columns.
    pub fn junk_measure(&self) -> Rational {
        self.columns
            .iter()
            .filter(|c| c.junk_top)
            .fold(Rational::zero(), |acc, c| acc + c.width())
    }

    pub fn base_measure(&self) -> Rational {
        self.components.iter().fold(Rational::zero(), |acc, c| acc + &c.base_width)
    }

    pub fn is_junk(&self, p: &Pt) -> bool {
        let c = &self.columns[p.column];
        c.junk_top && p.level + 1 == c.height
    }

    /// Cell containing position `v` of component `comp`'s base.
    fn locate(&self, comp: usize, v: &Rational) -> (usize, usize, Rational) {
        let lay = &self.layout[comp];
        let idx = lay.partition_point(|(s, _, _)| s <= v) - 1;
        let (s, col, cell) = &lay[idx];
        (*col, *cell, v - s)
    }

    /// Image of a top-level point under the closing map.
    pub fn close(&self, column: usize, cell: usize, offset: &Rational) -> Pt {
        let comp = &self.components[self.columns[column].component];
        let mut v = self.base_position(column, cell) + offset + &comp.shift;
        if v >= comp.base_width {
            v -= &comp.base_width;
        }
        let (c, k, off) = self.locate(self.columns[column].component, &v);
        Pt {
            column: c,
            level: 0,
            cell: k,
            offset: off,
        }
    }

    /// Splits a top cell into pieces with one image cell each.
    pub fn closure_pieces(&self, column: usize, cell: usize) -> Vec<ClosurePiece> {
        let ci = self.columns[column].component;
        let comp = &self.components[ci];
        let w = self.width(column, cell);
        let start = self.base_position(column, cell) + &comp.shift;
        let mut segs: Vec<(Rational, Rational, Rational)> = Vec::new(); // (from_offset, image start, width)
        if start >= comp.base_width {
            segs.push((Rational::zero(), &start - &comp.base_width, w.clone()));
        } else if &start + w > comp.base_width {
            let first = &comp.base_width - &start;
            segs.push((Rational::zero(), start.clone(), first.clone()));
            segs.push((first.clone(), Rational::zero(), w - first));
        } else {
            segs.push((Rational::zero(), start, w.clone()));
        }
        let lay = &self.layout[ci];
        let mut out = Vec::new();
        for (from, img, width) in segs {
            let end = &img + &width;
            let mut idx = lay.partition_point(|(s, _, _)| s <= &img) - 1;
            let mut pos = img.clone();
            while pos < end {
                let (s, c, k) = &lay[idx];
                let cell_end = s + self.width(*c, *k);
                let piece_end = if cell_end < end { cell_end } else { end.clone() };
                out.push(ClosurePiece {
                    from_offset: &from + (&pos - &img),
                    width: &piece_end - &pos,
                    to_column: *c,
                    to_cell: *k,
                    to_offset: &pos - s,
                });
                pos = piece_end;
                idx += 1;
            }
        }
        out
    }

    pub fn apply_t(&self, p: &Pt) -> Pt {
        if p.level + 1 < self.columns[p.column].height {
            Pt {
                level: p.level + 1,
                ..p.clone()
            }
        } else {
            self.close(p.column, p.cell, &p.offset)
        }
    }

    pub fn is_valid(&self, p: &Pt) -> bool {
        p.column < self.columns.len()
            && p.cell < self.columns[p.column].cells.len()
            && p.level < self.columns[p.column].height
            && p.offset >= Rational::zero()
            && &p.offset < self.width(p.column, p.cell)
    }

    /// Checks total measure, column heights, junk bound and that the
    /// closing map partitions every component base exactly.
    pub fn check_invariants(&self, gamma: Option<&Rational>) -> Result<()> {
        if self.total_measure() != Rational::one() {
            return Err(Error::CastleInvariant(format!(
                "total measure {}",
                rational::fmt(&self.total_measure())
            )));
        }
        let n = self.main_height;
        for (id, c) in self.columns.iter().enumerate() {
            let ok = if c.junk_top { c.height == n + 1 } else { c.height == n };
            if !ok {
                return Err(Error::CastleInvariant(format!("column {id} has height {} for main height {n}", c.height)));
            }
        }
        if let Some(g) = gamma {
            if &self.junk_measure() > g {
                return Err(Error::CastleInvariant(format!(
                    "junk measure {} exceeds {}",
                    rational::fmt(&self.junk_measure()),
                    rational::fmt(g)
                )));
            }
        }
        // every top cell, junk cells included, maps into level 0 and the images tile each base
        let mut covered: Vec<Vec<Rational>> = self
            .columns
            .iter()
            .map(|c| vec![Rational::zero(); c.cells.len()])
            .collect();
        for (id, c) in self.columns.iter().enumerate() {
            for k in 0..c.cells.len() {
                let pieces = self.closure_pieces(id, k);
                let total = pieces.iter().fold(Rational::zero(), |a, p| a + &p.width);
                if &total != self.width(id, k) {
                    return Err(Error::CastleInvariant(format!("closure of cell ({id},{k}) loses mass")));
                }
                for p in pieces {
                    covered[p.to_column][p.to_cell] += &p.width;
                }
            }
        }
        for (id, c) in self.columns.iter().enumerate() {
            for (k, w) in c.cells.iter().enumerate() {
                if &covered[id][k] != w {
                    return Err(Error::CastleInvariant(format!("base cell ({id},{k}) not covered exactly once")));
                }
            }
        }
        Ok(())
    }

    /// Exact sampler for `mu` when the integer weights fit in 128 bits,
    /// otherwise weights rounded to 2^-120 relative precision.
    pub fn sampler(&self) -> Sampler {
        let mut den = BigInt::one();
        for c in &self.columns {
            for w in &c.cells {
                den = den.lcm(w.denom());
            }
        }
        let mut raw: Vec<(usize, usize, BigUint)> = Vec::with_capacity(self.num_cells());
        for (id, c) in self.columns.iter().enumerate() {
            for (k, w) in c.cells.iter().enumerate() {
                let num = (w.numer() * (&den / w.denom())) * BigInt::from(c.height);
                raw.push((id, k, num.to_biguint().expect("positive width")));
            }
        }
        let total: BigUint = raw.iter().map(|r| &r.2).sum();
        let shift = total.bits().saturating_sub(120);
        let mut acc = 0u128;
        let mut cumulative = Vec::with_capacity(raw.len());
        let mut rects = Vec::with_capacity(raw.len());
        for (id, k, w) in raw {
            let v = (w >> shift).to_u128().expect("fits after shift");
            if v == 0 {
                continue;
            }
            acc += v;
            cumulative.push(acc);
            rects.push((id, k));
        }
        Sampler {
            cumulative,
            rects,
            exact: shift == 0,
        }
    }

    /// Splits cells at the given column-local positions. Returns the new
    /// castle and, for every new cell, the index of the cell it came from.
    pub fn split_cells(&self, cuts: &[Vec<Rational>]) -> Result<(Castle, Vec<Vec<usize>>)> {
        let mut columns = self.columns.clone();
        let mut origin = Vec::with_capacity(columns.len());
        for (id, col) in columns.iter_mut().enumerate() {
            let mut pts: Vec<Rational> = self.cell_starts[id].iter().skip(1).cloned().collect();
            let width = col.width();
            pts.extend(cuts[id].iter().filter(|c| *c > &Rational::zero() && *c < &width).cloned());
            pts.sort();
            pts.dedup();
            let mut cells = Vec::with_capacity(pts.len() + 1);
            let mut from = Vec::with_capacity(pts.len() + 1);
            let mut last = Rational::zero();
            for p in pts.into_iter().chain(std::iter::once(width)) {
                let idx = self.cell_starts[id].partition_point(|s| s <= &last) - 1;
                cells.push(&p - &last);
                from.push(idx);
                last = p;
            }
            col.cells = cells;
            origin.push(from);
        }
        let castle = Castle::from_columns(columns, self.main_height, self.lineage.clone())?;
        Ok((castle, origin))
    }

    /// Serializable snapshot (widths as "p/q" strings).
    pub fn dump(&self) -> CastleDump {
        CastleDump {
            main_height: self.main_height,
            junk_measure: rational::fmt(&self.junk_measure()),
            closing_fraction: format!("{CLOSING_NUM}/{CLOSING_DEN}"),
            columns: self
                .columns
                .iter()
                .enumerate()
                .map(|(id, c)| ColumnDump {
                    id,
                    component: c.component,
                    height: c.height,
                    junk_top: c.junk_top,
                    cells: c.cells.iter().map(rational::fmt).collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ColumnDump {
    pub id: usize,
    pub component: usize,
    pub height: u64,
    pub junk_top: bool,
    pub cells: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CastleDump {
    pub main_height: u64,
    pub junk_measure: String,
    pub closing_fraction: String,
    pub columns: Vec<ColumnDump>,
}

/// Draws points of a castle according to `mu`.
#[derive(Debug, Clone)]
pub struct Sampler {
    cumulative: Vec<u128>,
    rects: Vec<(usize, usize)>,
    pub exact: bool,
}

/// Resolution of sampled offsets inside a cell.
pub const OFFSET_BITS: u32 = 32;

impl Sampler {
    pub fn sample<R: Rng + ?Sized>(&self, castle: &Castle, rng: &mut R) -> Pt {
        let total = *self.cumulative.last().expect("nonempty castle");
        let u = rng.gen_range(0..total);
        let idx = self.cumulative.partition_point(|&c| c <= u);
        let (column, cell) = self.rects[idx];
        let level = rng.gen_range(0..castle.columns[column].height);
        let k: u64 = rng.gen_range(0..(1u64 << OFFSET_BITS));
        let offset = castle.width(column, cell) * rational::ratio(k as i64, 1i64 << OFFSET_BITS);
        Pt {
            column,
            level,
            cell,
            offset,
        }
    }
}

pub fn sample_point<R: Rng + ?Sized>(castle: &Castle, rng: &mut R) -> Pt {
    castle.sampler().sample(castle, rng)
}

/// Widths of the initial two-column castle: the long column gets the largest
/// dyadic width not above `min(gamma, 1/(2n+2))`.
pub fn initial_widths(n: u64, gamma: &Rational) -> Result<(Rational, Rational)> {
    if n == 0 {
        return Err(Error::CastleInvariant("height must be positive".into()));
    }
    if gamma <= &Rational::zero() || gamma >= &Rational::one() {
        return Err(Error::CastleInvariant("gamma must lie in (0, 1)".into()));
    }
    let cap = rational::ratio(1, 2 * n as i64 + 2);
    let w2 = rational::dyadic_floor(if gamma < &cap { gamma } else { &cap });
    let w1 = (Rational::one() - rational::from_u64(n + 1) * &w2) / rational::from_u64(n);
    Ok((w1, w2))
}

/// Two columns of heights `n` and `n + 1`; the top of the taller one is the
/// junk set.
pub fn build_initial_castle(n: u64, gamma: &Rational) -> Result<Castle> {
    build_initial_components(n, gamma, 1)
}

/// `components` identical copies of the initial castle, each of weight
/// `1/components`, with separate closing maps.
pub fn build_initial_components(n: u64, gamma: &Rational, components: usize) -> Result<Castle> {
    let (w1, w2) = initial_widths(n, gamma)?;
    let scale = rational::ratio(1, components as i64);
    let mut cols = Vec::new();
    for comp in 0..components {
        cols.push(Column {
            height: n,
            cells: vec![&w1 * &scale],
            junk_top: false,
            component: comp,
        });
        cols.push(Column {
            height: n + 1,
            cells: vec![&w2 * &scale],
            junk_top: true,
            component: comp,
        });
    }
    Castle::from_columns(cols, n, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn initial_castle_widths() {
        let c = build_initial_castle(8, &ratio(1, 16)).unwrap();
        assert_eq!(c.column(1).cells[0], ratio(1, 32));
        assert_eq!(c.column(0).cells[0], ratio(23, 256));
        assert_eq!(c.junk_measure(), ratio(1, 32));
        c.check_invariants(Some(&ratio(1, 16))).unwrap();

        let c = build_initial_castle(1, &ratio(1, 2)).unwrap();
        assert_eq!((c.column(0).height, c.column(1).height), (1, 2));
        c.check_invariants(Some(&ratio(1, 2))).unwrap();
    }

    #[test]
    fn t_moves_up_and_junk_returns_to_base() {
        let c = build_initial_castle(8, &ratio(1, 16)).unwrap();
        let p = Pt {
            column: 0,
            level: 3,
            cell: 0,
            offset: ratio(1, 100),
        };
        assert_eq!(c.apply_t(&p).level, 4);
        let j = Pt {
            column: 1,
            level: 8,
            cell: 0,
            offset: ratio(1, 100),
        };
        assert!(c.is_junk(&j));
        assert_eq!(c.apply_t(&j).level, 0);
        let mut q = Pt { level: 0, ..p };
        for _ in 0..8 {
            q = c.apply_t(&q);
        }
        assert_eq!(q.level, 0);
        assert!(c.is_valid(&q));
    }

    #[test]
    fn sampler_on_single_cell() {
        let c = Castle::from_columns(
            vec![Column {
                height: 1,
                cells: vec![Rational::one()],
                junk_top: false,
                component: 0,
            }],
            1,
            None,
        )
        .unwrap();
        let s = c.sampler();
        assert!(s.exact);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let p = s.sample(&c, &mut rng);
            assert!(c.is_valid(&p));
        }
    }
}

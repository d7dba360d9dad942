//! Loop-nest to array mapping for the flexible array and the rigid baseline.
//!
//! A mapping is summarised as a handful of [`FoldClass`]es: groups of tile
//! passes with identical shape. Each class records the pipeline shape used
//! by the timing model (`rows`, `cols`, `stream`), how many weight lanes
//! are mapped and how many multiplications it performs.

use super::{Partition, RigidSA, Scheme, Workload, GEOMETRY};
use crate::error::{Error, Result};
use crate::formats::DataFormat;
use crate::multiplier::MultMode;

use super::LayerSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct FoldClass {
    /// Number of tile passes with this shape.
    pub count: u64,
    /// Pipeline depth a psum travels before leaving the array.
    pub rows: u32,
    /// Columns the input skew crosses.
    pub cols: u32,
    /// Inputs streamed per tile.
    pub stream: u64,
    /// Mapped weight lanes per tile (average over the class).
    pub mapped_lanes: f64,
    /// Occupied MAC units per tile.
    pub mapped_units: u64,
    /// Distinct psum streams leaving the array per cycle.
    pub psum_streams: u64,
    /// Multiplications performed by all tiles of the class.
    pub mac_ops: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LrmuGroups {
    pub groups: u32,
    pub group_size: u32,
}

impl LrmuGroups {
    pub fn active_units(&self) -> u32 {
        self.groups * self.group_size
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mapping {
    pub partition: usize,
    pub scheme: Scheme,
    pub rows: u32,
    pub cols: u32,
    pub lanes: u32,
    pub row_assignment: &'static str,
    pub col_assignment: &'static str,
    /// Occupied MAC units in the first (largest) tile.
    pub active_macs: u64,
    pub lrmu: Option<LrmuGroups>,
    pub folds: u64,
    /// Passes over the reduction dimension; partial outputs are revisited
    /// between them.
    pub row_folds: u64,
    pub col_folds: u64,
    /// Pieces each group's reduction is cut into; 1 for accumulable layers.
    pub segments: u64,
    pub classes: Vec<FoldClass>,
    pub mac_ops: u64,
}

impl Mapping {
    pub fn units(&self) -> u64 {
        self.rows as u64 * self.cols as u64
    }
}

fn div_ceil(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// Split `total` into `parts` near-equal pieces: `(count, size)` pairs,
/// larger pieces first.
fn balanced(total: u64, parts: u64) -> Vec<(u64, u64)> {
    let small = total / parts;
    let n_big = total % parts;
    let mut out = Vec::with_capacity(2);
    if n_big > 0 {
        out.push((n_big, small + 1));
    }
    if parts > n_big && small > 0 {
        out.push((parts - n_big, small));
    }
    out
}

/// Folds one group's segments span. Segments of a group are adjacent items,
/// so those sharing a fold combine as they drain.
fn segment_passes(segments: u64, items: u64, folds: u64) -> u64 {
    div_ceil(segments, (items / folds).max(1))
}

/// Reduction split into `segments` near-equal pieces of at most `cap` taps.
#[derive(Debug, Clone, Copy)]
struct Segments {
    reduction: u64,
    segments: u64,
    big: u64,
    small: u64,
    n_big: u64,
}

impl Segments {
    fn new(reduction: u64, cap: u64) -> Self {
        let segments = div_ceil(reduction, cap);
        let small = reduction / segments;
        let n_big = reduction % segments;
        Segments {
            reduction,
            segments,
            big: if n_big > 0 { small + 1 } else { small },
            small,
            n_big,
        }
    }

    /// Taps held by the first `x` items in filter-major order.
    fn prefix(&self, x: u64) -> u64 {
        let (whole, j) = (x / self.segments, x % self.segments);
        let nb = j.min(self.n_big);
        whole * self.reduction + nb * self.big + (j - nb) * self.small
    }
}

fn lanes_of(fmt: DataFormat) -> u32 {
    MultMode::for_format(fmt).lanes() as u32
}

fn layer_format(layer: &LayerSpec, fmt: Option<DataFormat>) -> Result<DataFormat> {
    layer.format.or(fmt).ok_or_else(|| Error::Schema {
        field: format!("{}.format", layer.name),
        detail: "no format given for layer or scenario".into(),
    })
}

fn map_accumulable(
    m: u64,
    k: u64,
    n: u64,
    rows: u32,
    cols: u32,
    lanes: u32,
    partition: usize,
) -> Mapping {
    let (pr, pc, l) = (rows as u64, cols as u64, lanes as u64);
    let k_units = div_ceil(k, l);
    let row_folds = div_ceil(k_units, pr);
    let col_folds = div_ceil(n, pc);

    // (count, units, reduction elements) per row-fold kind
    let mut row_kinds = vec![];
    if row_folds > 1 {
        row_kinds.push((row_folds - 1, pr, pr * l));
    }
    let done = (row_folds - 1) * pr;
    row_kinds.push((1, k_units - done, k - done * l));
    let mut col_kinds = vec![];
    if col_folds > 1 {
        col_kinds.push((col_folds - 1, pc));
    }
    col_kinds.push((1, n - (col_folds - 1) * pc));

    let mut classes = vec![];
    for &(cc, c) in &col_kinds {
        for &(rc, r, elems) in &row_kinds {
            classes.push(FoldClass {
                count: cc * rc,
                rows: r as u32,
                cols: c as u32,
                stream: m,
                mapped_lanes: (elems * c) as f64,
                mapped_units: r * c,
                psum_streams: c,
                mac_ops: cc * rc * elems * c * m,
            });
        }
    }
    Mapping {
        partition,
        scheme: Scheme::Accumulable,
        rows,
        cols,
        lanes,
        row_assignment: "reduction (input channels x kernel taps, or GEMM k)",
        col_assignment: "output channels (or GEMM n)",
        active_macs: classes[0].mapped_units,
        lrmu: None,
        folds: row_folds * col_folds,
        row_folds,
        col_folds,
        segments: 1,
        mac_ops: classes.iter().map(|c| c.mac_ops).sum(),
        classes,
    }
}

/// Map a layer onto one partition of the flexible array.
///
/// Accumulable layers use the partition as one weight-stationary array.
/// Unaccumulable layers cut every stationary vector into segments of at
/// most `9 * lanes` taps; a segment occupies one subarray column or one
/// LRMU group, and each drains through its own output. Replicas of a
/// segment in different subarrays or LRMU groups split its input stream.
/// With every local bridge connected the partition behaves as a rigid
/// array, and that mapping is used when its utilization is higher.
pub fn map_layer(
    layer: &LayerSpec,
    partition: &Partition,
    fmt: Option<DataFormat>,
) -> Result<Mapping> {
    let m = map_segmented(layer, partition, fmt)?;
    if m.scheme == Scheme::Unaccumulable {
        let sa = RigidSA::new(partition.rows, partition.cols);
        let rigid = map_layer_rigid(layer, &sa, fmt)?;
        if utilization(&rigid) > utilization(&m) {
            return Ok(Mapping {
                partition: partition.id,
                ..rigid
            });
        }
    }
    Ok(m)
}

fn map_segmented(
    layer: &LayerSpec,
    partition: &Partition,
    fmt: Option<DataFormat>,
) -> Result<Mapping> {
    layer.validate()?;
    let lanes = lanes_of(layer_format(layer, fmt)?);
    match layer.workload() {
        Workload::Accumulable { m, k, n } => Ok(map_accumulable(
            m,
            k,
            n,
            partition.rows,
            partition.cols,
            lanes,
            partition.id,
        )),
        Workload::Unaccumulable {
            groups,
            reduction,
            stream,
            ..
        } => {
            let g = GEOMETRY;
            let l = lanes as u64;
            let seg = Segments::new(reduction, g.subarray_rows as u64 * l);
            let u = div_ceil(seg.big, l);
            let lrmu_groups = g.lrmu_groups(u as u32) as u64;
            let blocks = partition.blocks.len() as u64;
            let sub_cols = g.subarrays_per_block as u64 * blocks;
            let slots = blocks * (g.subarrays_per_block as u64 * g.columns as u64 + lrmu_groups);

            let items = groups * seg.segments;
            let folds = div_ceil(items, slots);
            let mut classes = vec![];
            let mut start = 0;
            for (count, f) in balanced(items, folds) {
                let end = start + count * f;
                let taps = seg.prefix(end) - seg.prefix(start);
                start = end;
                let mapped = sub_cols * f.min(g.columns as u64) + blocks * lrmu_groups;
                let replicas = mapped / f;
                classes.push(FoldClass {
                    count,
                    rows: u as u32,
                    cols: g.columns,
                    stream: div_ceil(stream, replicas),
                    mapped_lanes: (mapped * taps) as f64 / (f * count) as f64,
                    mapped_units: mapped * u,
                    psum_streams: mapped,
                    mac_ops: taps * stream,
                });
            }
            Ok(Mapping {
                partition: partition.id,
                scheme: Scheme::Unaccumulable,
                rows: partition.rows,
                cols: partition.cols,
                lanes,
                row_assignment: "filter taps (one segment per subarray column)",
                col_assignment: "filters (output channels)",
                active_macs: classes[0].mapped_units,
                lrmu: Some(LrmuGroups {
                    groups: lrmu_groups as u32,
                    group_size: u as u32,
                }),
                folds,
                row_folds: segment_passes(seg.segments, items, folds),
                col_folds: folds,
                segments: seg.segments,
                mac_ops: classes.iter().map(|c| c.mac_ops).sum(),
                classes,
            })
        }
        Workload::Vector { .. } => Err(Error::Unsupported(format!(
            "layer `{}` runs on the vector unit",
            layer.name
        ))),
    }
}

/// Map a layer onto a rigid weight-stationary array.
///
/// Accumulable layers map exactly as on the flexible array. Unaccumulable
/// layers may produce at most one psum stream per column: each column holds
/// one segment of at most `window` taps, every column sees the same input
/// rows so no segment is replicated, and psums cross the full column height.
/// A window taller than the column is cut into near-equal pieces.
pub fn map_layer_rigid(
    layer: &LayerSpec,
    sa: &RigidSA,
    fmt: Option<DataFormat>,
) -> Result<Mapping> {
    layer.validate()?;
    let lanes = lanes_of(layer_format(layer, fmt)?);
    match layer.workload() {
        Workload::Accumulable { m, k, n } => {
            Ok(map_accumulable(m, k, n, sa.rows, sa.cols, lanes, 0))
        }
        Workload::Unaccumulable {
            groups,
            reduction,
            stream,
            window,
        } => {
            let l = lanes as u64;
            let column = sa.rows as u64 * l;
            let piece = div_ceil(window, div_ceil(window, column));
            let cap = reduction.min(piece);
            let seg = Segments::new(reduction, cap);
            let rows_used = div_ceil(seg.big, l);
            let items = groups * seg.segments;
            let cols = sa.output_bus_width() as u64;
            let folds = div_ceil(items, cols);
            let mut classes = vec![];
            let mut start = 0;
            for (count, f) in balanced(items, folds) {
                let end = start + count * f;
                let taps = seg.prefix(end) - seg.prefix(start);
                start = end;
                classes.push(FoldClass {
                    count,
                    rows: sa.rows,
                    cols: sa.cols,
                    stream,
                    mapped_lanes: taps as f64 / count as f64,
                    mapped_units: f * rows_used,
                    psum_streams: f,
                    mac_ops: taps * stream,
                });
            }
            Ok(Mapping {
                partition: 0,
                scheme: Scheme::Unaccumulable,
                rows: sa.rows,
                cols: sa.cols,
                lanes,
                row_assignment: "filter taps (one window per column)",
                col_assignment: "filters (one per output-bus word)",
                active_macs: classes[0].mapped_units,
                lrmu: None,
                folds,
                row_folds: segment_passes(seg.segments, items, folds),
                col_folds: folds,
                segments: seg.segments,
                mac_ops: classes.iter().map(|c| c.mac_ops).sum(),
                classes,
            })
        }
        Workload::Vector { .. } => Err(Error::Unsupported(format!(
            "layer `{}` runs on the vector unit",
            layer.name
        ))),
    }
}

/// Time-weighted fraction of MAC lanes holding mapped weights.
pub fn utilization(mapping: &Mapping) -> f64 {
    let capacity = (mapping.units() * mapping.lanes as u64) as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for c in &mapping.classes {
        let w = (c.count * c.stream) as f64;
        num += w * c.mapped_lanes;
        den += w * capacity;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{ConvDims, DwConvDims, FusionPattern, LayerOp, Step};

    fn block() -> Partition {
        FusionPattern::E.partitions().remove(0)
    }

    fn dw(c: u32, k: u32) -> LayerSpec {
        LayerSpec::new(
            "dw",
            LayerOp::Dwconv(DwConvDims {
                n: 1,
                c,
                h: 56,
                w: 56,
                k,
                stride: 1,
                pad: None,
            }),
            Step::Fw,
        )
        .with_format(DataFormat::INT8)
    }

    #[test]
    fn balanced_split() {
        assert_eq!(balanced(10, 3), vec![(1, 4), (2, 3)]);
        assert_eq!(balanced(9, 3), vec![(3, 3)]);
        assert_eq!(balanced(2, 2), vec![(2, 1)]);
    }

    #[test]
    fn segment_prefix() {
        let s = Segments::new(25, 9);
        assert_eq!((s.segments, s.big, s.small, s.n_big), (3, 9, 8, 1));
        assert_eq!(s.prefix(3), 25);
        assert_eq!(s.prefix(4), 34);
        assert_eq!(s.prefix(5), 42);
    }

    #[test]
    fn depthwise_block_occupancy() {
        let m = map_layer(&dw(64, 3), &block(), None).unwrap();
        assert_eq!(m.active_macs, 4095);
        assert_eq!(m.lrmu.unwrap().active_units(), 63);
        assert_eq!(m.lrmu.unwrap().groups, 7);
        assert_eq!(utilization(&m), 4095.0 / 4096.0);
        assert_eq!(m.mac_ops, dw(64, 3).mac_ops());
    }

    #[test]
    fn depthwise_rigid() {
        let m = map_layer_rigid(&dw(64, 3), &RigidSA::new(64, 64), None).unwrap();
        assert_eq!(m.active_macs, 576);
        assert_eq!(utilization(&m), 9.0 / 64.0);
    }

    #[test]
    fn tall_window_rigid_pieces() {
        // 121 taps in two pieces of 61 and 60 rows, side by side
        let m = map_layer_rigid(&dw(64, 11), &RigidSA::new(64, 64), None).unwrap();
        assert_eq!((m.folds, m.row_folds), (2, 1));
        assert_eq!(m.classes[0].mapped_units, 64 * 61);
        assert!((utilization(&m) - 121.0 / 128.0).abs() < 1e-12);
        assert!(utilization(&map_layer(&dw(64, 11), &block(), None).unwrap()) > utilization(&m));
    }

    #[test]
    fn column_sized_window_uses_rigid_mapping() {
        let rigid = map_layer_rigid(&dw(64, 8), &RigidSA::new(64, 64), None).unwrap();
        assert_eq!(utilization(&rigid), 1.0);
        let m = map_layer(&dw(64, 8), &block(), None).unwrap();
        assert_eq!(utilization(&m), 1.0);
        assert!(m.lrmu.is_none());
        assert_eq!(m.mac_ops, dw(64, 8).mac_ops());
    }

    #[test]
    fn pointwise_exact_fit() {
        let l = LayerSpec::new(
            "pw",
            LayerOp::Conv(ConvDims {
                n: 1,
                c_in: 64,
                c_out: 64,
                h: 14,
                w: 14,
                k: 1,
                stride: 1,
                pad: None,
            }),
            Step::Fw,
        );
        let m = map_layer(&l, &block(), Some(DataFormat::INT8)).unwrap();
        assert_eq!(m.active_macs, 4096);
        assert_eq!(m.folds, 1);
        assert_eq!(m.classes[0].stream, 196);
        assert_eq!(utilization(&m), 1.0);
        let r = map_layer_rigid(&l, &RigidSA::new(64, 64), Some(DataFormat::INT8)).unwrap();
        assert_eq!(r.classes, m.classes);
    }

    #[test]
    fn gemm_on_full_array() {
        let h = FusionPattern::H.partitions().remove(0);
        let m = map_layer(
            &LayerSpec::gemm("g", 128, 128, 128),
            &h,
            Some(DataFormat::INT8),
        )
        .unwrap();
        assert_eq!(m.active_macs, 16384);
        assert_eq!(utilization(&m), 1.0);
    }

    #[test]
    fn lanes_pack_the_reduction() {
        let l = LayerSpec::gemm("g", 10, 256, 64).with_format(DataFormat::FP8A);
        let m = map_layer(&l, &block(), None).unwrap();
        assert_eq!((m.row_folds, m.active_macs), (1, 4096));
        assert_eq!(utilization(&m), 1.0);
    }

    #[test]
    fn large_kernel_segments_share_a_fold() {
        // 25 taps in segments of 9, 8 and 8 units
        let m = map_layer(&dw(64, 5), &block(), None).unwrap();
        assert_eq!((m.folds, m.row_folds), (1, 1));
        assert_eq!(m.classes[0].rows, 9);
        assert_eq!(m.mac_ops, dw(64, 5).mac_ops());
    }

    #[test]
    fn long_reduction_spans_folds() {
        let d = DwConvDims {
            n: 8,
            c: 64,
            h: 56,
            w: 56,
            k: 3,
            stride: 1,
            pad: None,
        };
        let l = LayerSpec::new("wg", LayerOp::Dwconv(d), Step::Wg).with_format(DataFormat::INT8);
        let m = map_layer(&l, &block(), None).unwrap();
        // 25088 taps make 2788 segments; 64 * 2788 items over 455 slots
        assert_eq!(m.folds, 393);
        assert_eq!(m.row_folds, 7);
    }

    #[test]
    fn missing_format_is_schema_error() {
        let l = LayerSpec::gemm("g", 1, 1, 1);
        assert!(matches!(
            map_layer(&l, &block(), None),
            Err(Error::Schema { .. })
        ));
    }
}

//! Modulation selection, slot sizing, core-group ordering, and first-fit
//! contiguous slot search. Everything here is a read-only search; commitment
//! happens through [`Topology::reserve`](crate::model::Topology::reserve).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{BlockReason, LinkId, NodeId, SegmentAllocation, SlotBlock, Topology};
use crate::routing::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modulation {
    #[serde(rename = "BPSK", alias = "bpsk")]
    Bpsk,
    #[serde(rename = "QPSK", alias = "qpsk")]
    Qpsk,
    #[serde(rename = "QAM16", alias = "16QAM", alias = "qam16")]
    Qam16,
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modulation::Bpsk => "BPSK",
            Modulation::Qpsk => "QPSK",
            Modulation::Qam16 => "16-QAM",
        })
    }
}

impl FromStr for Modulation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "").as_str() {
            "BPSK" => Ok(Modulation::Bpsk),
            "QPSK" => Ok(Modulation::Qpsk),
            "QAM16" | "16QAM" => Ok(Modulation::Qam16),
            other => Err(format!("unknown modulation format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationEntry {
    pub format: Modulation,
    pub reach_km: f64,
    pub slots_per_gbps: u32,
}

/// Formats ordered from most to least spectrally efficient. Reach and
/// slots-per-Gbps both increase strictly down the table.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationTable {
    entries: Vec<ModulationEntry>,
}

impl Default for ModulationTable {
    fn default() -> Self {
        Self::standard()
    }
}

impl ModulationTable {
    /// 16-QAM 500 km / 1 slot per Gbps, QPSK 1000 km / 2, BPSK 2000 km / 4.
    pub fn standard() -> Self {
        ModulationTable {
            entries: vec![
                ModulationEntry { format: Modulation::Qam16, reach_km: 500.0, slots_per_gbps: 1 },
                ModulationEntry { format: Modulation::Qpsk, reach_km: 1000.0, slots_per_gbps: 2 },
                ModulationEntry { format: Modulation::Bpsk, reach_km: 2000.0, slots_per_gbps: 4 },
            ],
        }
    }

    pub fn new(mut entries: Vec<ModulationEntry>) -> Result<Self, String> {
        if entries.is_empty() {
            return Err("modulation table is empty".into());
        }
        entries.sort_by(|a, b| a.reach_km.total_cmp(&b.reach_km));
        for pair in entries.windows(2) {
            if pair[0].reach_km >= pair[1].reach_km || pair[0].slots_per_gbps >= pair[1].slots_per_gbps {
                return Err(format!(
                    "reach and slots per Gbps must both increase strictly ({} then {})",
                    pair[0].format, pair[1].format
                ));
            }
            if pair[0].format == pair[1].format {
                return Err(format!("{} listed twice", pair[0].format));
            }
        }
        if entries.iter().any(|e| e.reach_km.is_nan() || e.reach_km <= 0.0 || e.slots_per_gbps == 0) {
            return Err("reach and slots per Gbps must be positive".into());
        }
        Ok(ModulationTable { entries })
    }

    pub fn entries(&self) -> &[ModulationEntry] {
        &self.entries
    }

    pub fn entry(&self, format: Modulation) -> Option<&ModulationEntry> {
        self.entries.iter().find(|e| e.format == format)
    }

    /// Most efficient format whose reach covers `distance_km` (boundaries
    /// inclusive), or `None` when no format reaches that far.
    pub fn modulation_for(&self, distance_km: f64) -> Option<Modulation> {
        self.entries.iter().find(|e| distance_km <= e.reach_km).map(|e| e.format)
    }

    /// Slots needed to carry `bandwidth_gbps` with `format`.
    ///
    /// Panics if `format` is not in the table.
    pub fn slots_required(&self, bandwidth_gbps: u32, format: Modulation) -> usize {
        let eta = self.entry(format).unwrap_or_else(|| panic!("{format} not in modulation table")).slots_per_gbps;
        (bandwidth_gbps * eta) as usize
    }
}

/// Fixed-length free-slot mask; bit set = slot free on every link considered.
#[derive(Debug, Clone)]
struct FreeMask {
    words: Vec<u64>,
    len: usize,
}

impl FreeMask {
    fn all_free(len: usize) -> Self {
        let mut words = vec![u64::MAX; len.div_ceil(64)];
        if !len.is_multiple_of(64) {
            if let Some(last) = words.last_mut() {
                *last = (1u64 << (len % 64)) - 1;
            }
        }
        FreeMask { words, len }
    }

    fn remove_occupied(&mut self, occupied: &[u64]) {
        for (w, o) in self.words.iter_mut().zip(occupied) {
            *w &= !o;
        }
    }

    fn remove_block(&mut self, block: SlotBlock) {
        for s in block.range().filter(|&s| s < self.len) {
            self.words[s / 64] &= !(1 << (s % 64));
        }
    }

    fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// First index `>= from` whose bit equals `set`, or `len`.
    fn next(&self, from: usize, set: bool) -> usize {
        let mut i = from;
        while i < self.len {
            let word = if set { self.words[i / 64] } else { !self.words[i / 64] };
            let shifted = word >> (i % 64);
            if shifted != 0 {
                return (i + shifted.trailing_zeros() as usize).min(self.len);
            }
            i = (i / 64 + 1) * 64;
        }
        self.len
    }

    /// Lowest start of a run of `needed` consecutive free slots.
    fn first_run(&self, needed: usize) -> Option<usize> {
        if needed == 0 || needed > self.len {
            return None;
        }
        let mut start = self.next(0, true);
        while start + needed <= self.len {
            let end = self.next(start, false);
            if end - start >= needed {
                return Some(start);
            }
            start = self.next(end, true);
        }
        None
    }
}

/// Committed state plus slots already claimed by earlier segments of the
/// mapping under construction.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumView<'a> {
    pub topology: &'a Topology,
    pub pending: &'a [SegmentAllocation],
}

impl<'a> SpectrumView<'a> {
    pub fn new(topology: &'a Topology) -> Self {
        SpectrumView { topology, pending: &[] }
    }

    pub fn with_pending(topology: &'a Topology, pending: &'a [SegmentAllocation]) -> Self {
        SpectrumView { topology, pending }
    }

    fn link_mask(&self, link: LinkId, core: usize) -> FreeMask {
        let mut mask = FreeMask::all_free(self.topology.graph().slots_per_core());
        mask.remove_occupied(self.topology.grid(link, core).occupancy_words());
        for seg in self.pending.iter().filter(|s| s.core == core && s.path.links.contains(&link)) {
            mask.remove_block(seg.slots);
        }
        mask
    }

    fn path_mask(&self, links: &[LinkId], core: usize) -> FreeMask {
        let mut mask = FreeMask::all_free(self.topology.graph().slots_per_core());
        for &link in links {
            mask.remove_occupied(self.topology.grid(link, core).occupancy_words());
            for seg in self.pending.iter().filter(|s| s.core == core && s.path.links.contains(&link)) {
                mask.remove_block(seg.slots);
            }
        }
        mask
    }

    /// Free slots on one core of one link.
    pub fn free_slots(&self, link: LinkId, core: usize) -> usize {
        self.link_mask(link, core).count()
    }
}

/// Which core groups a segment search may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchPolicy {
    /// Try lower-ranked groups when the best-ratio group has no fit.
    pub group_fallback: bool,
}

impl Default for SearchPolicy {
    fn default() -> Self {
        SearchPolicy { group_fallback: true }
    }
}

/// Group indices ordered by descending availability ratio over the path's
/// links, ties broken by lower group index.
pub fn select_core_group(view: &SpectrumView<'_>, path: &Path) -> Vec<usize> {
    let groups = view.topology.graph().core_groups().groups();
    let slots = view.topology.graph().slots_per_core();
    let mut ratios: Vec<(usize, usize, usize)> = groups
        .iter()
        .enumerate()
        .map(|(gi, cores)| {
            let free: usize = cores
                .iter()
                .flat_map(|&c| path.links.iter().map(move |&l| (l, c)))
                .map(|(l, c)| view.free_slots(l, c))
                .sum();
            (gi, free, cores.len() * path.links.len() * slots)
        })
        .collect();
    // Compare free_a/total_a against free_b/total_b without floating point.
    ratios.sort_by(|a, b| {
        let lhs = a.1 as u128 * b.2.max(1) as u128;
        let rhs = b.1 as u128 * a.2.max(1) as u128;
        rhs.cmp(&lhs).then(a.0.cmp(&b.0))
    });
    ratios.into_iter().map(|(gi, _, _)| gi).collect()
}

/// Smallest start index whose `needed` slots are free on `core` of every link
/// of `path`.
pub fn first_fit_block(view: &SpectrumView<'_>, path: &Path, core: usize, needed: usize) -> Option<usize> {
    view.path_mask(&path.links, core).first_run(needed)
}

/// Lowest-indexed core with a continuous, contiguous fit, ignoring groups.
pub fn first_core_fit(view: &SpectrumView<'_>, path: &Path, needed: usize) -> Option<(usize, usize)> {
    (0..view.topology.graph().cores_per_link())
        .find_map(|core| first_fit_block(view, path, core, needed).map(|start| (core, start)))
}

/// Group-ordered, core-ascending first fit.
pub fn grouped_fit(
    view: &SpectrumView<'_>,
    path: &Path,
    needed: usize,
    policy: SearchPolicy,
) -> Option<(usize, usize)> {
    let order = select_core_group(view, path);
    let groups = view.topology.graph().core_groups().groups();
    let tried = if policy.group_fallback { order.len() } else { order.len().min(1) };
    for &gi in &order[..tried] {
        let mut cores = groups[gi].clone();
        cores.sort_unstable();
        for core in cores {
            if let Some(start) = first_fit_block(view, path, core, needed) {
                return Some((core, start));
            }
        }
    }
    None
}

/// Modulation by path length, slot count, core group, then first fit.
pub fn allocate_segment(
    view: &SpectrumView<'_>,
    endpoints: (NodeId, NodeId),
    path: &Path,
    bandwidth_gbps: u32,
    policy: SearchPolicy,
) -> Result<SegmentAllocation, BlockReason> {
    let table = view.topology.graph().modulation();
    let modulation = table.modulation_for(path.distance_km).ok_or(BlockReason::ReachExceeded)?;
    let needed = table.slots_required(bandwidth_gbps, modulation);
    let (core, start) = grouped_fit(view, path, needed, policy).ok_or(BlockReason::NoSpectrum)?;
    Ok(SegmentAllocation {
        endpoints,
        path: path.clone(),
        modulation,
        core,
        slots: SlotBlock::new(start, needed),
    })
}

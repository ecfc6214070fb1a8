//! Bidirectional flow assembly from packet records.
//!
//! Flows are keyed on the canonical 5-tuple; the endpoint that sent the
//! first observed packet of a segment is the initiator and defines the
//! forward direction. Two segmentation modes exist: `Complete` (one flow
//! per key) and `ActiveTimeout` (a segment closes when the next packet
//! would stretch it past T seconds; the comparison is strict, so a packet
//! exactly at `first_ts + T` stays). No idle timeout is applied.

use std::collections::HashMap;
use std::fmt;
use std::net::IpAddr;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pcap::{PacketRecord, Transport};
use crate::tableio;

pub const DEFAULT_ACTIVE_TIMEOUT_SECS: u32 = 41;
pub const DEFAULT_MIN_PACKETS: usize = 20;
pub const FLOW_TABLE_SCHEMA: &str = "waveflow flows v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "nonvpn")]
    NonVpn,
    #[serde(rename = "vpn")]
    Vpn,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::NonVpn => write!(f, "nonvpn"),
            Label::Vpn => write!(f, "vpn"),
        }
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonvpn" => Ok(Label::NonVpn),
            "vpn" => Ok(Label::Vpn),
            other => Err(Error::Argument(format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Chat,
    CommandControl,
    FileTransfer,
    Streaming,
    Voip,
    Unknown,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Chat,
        Category::CommandControl,
        Category::FileTransfer,
        Category::Streaming,
        Category::Voip,
        Category::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Chat => "chat",
            Category::CommandControl => "command_control",
            Category::FileTransfer => "file_transfer",
            Category::Streaming => "streaming",
            Category::Voip => "voip",
            Category::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown category `{s}`")))
    }
}

/// Canonical bidirectional flow key. `(ip_a, port_a)` is the initiator
/// side; packets in either direction map to the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    pub ip_a: IpAddr,
    pub port_a: u16,
    pub ip_b: IpAddr,
    pub port_b: u16,
    pub protocol: Transport,
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-{}/{}",
            endpoint_str(self.ip_a, self.port_a),
            endpoint_str(self.ip_b, self.port_b),
            self.protocol
        )
    }
}

fn endpoint_str(ip: IpAddr, port: u16) -> String {
    match ip {
        IpAddr::V4(v4) => format!("{v4}:{port}"),
        IpAddr::V6(v6) => format!("[{v6}]:{port}"),
    }
}

/// One flow segment: size and timestamp sequences in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub key: FlowKey,
    pub file: String,
    pub segment_index: u32,
    pub label: Label,
    pub category: Category,
    pub fwd_sizes: Vec<u32>,
    pub bwd_sizes: Vec<u32>,
    pub fwd_ts_us: Vec<i64>,
    pub bwd_ts_us: Vec<i64>,
    /// Timestamp of the packet that opened the segment.
    pub first_ts_us: i64,
    /// Largest timestamp seen in the segment.
    pub last_ts_us: i64,
}

impl Flow {
    pub fn packet_count(&self) -> usize {
        self.fwd_sizes.len() + self.bwd_sizes.len()
    }

    pub fn duration_seconds(&self) -> f64 {
        (self.last_ts_us - self.first_ts_us) as f64 * 1e-6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeterMode {
    Complete,
    ActiveTimeout { seconds: u32 },
}

#[derive(Debug, Clone, Copy)]
pub struct MeterConfig {
    pub mode: MeterMode,
    /// Packets older than this relative to the newest timestamp seen are
    /// counted as out-of-order (they are still metered).
    pub reorder_window_us: i64,
}

impl MeterConfig {
    pub fn complete() -> Self {
        MeterConfig {
            mode: MeterMode::Complete,
            reorder_window_us: 1_000_000,
        }
    }

    pub fn active_timeout(seconds: u32) -> Self {
        MeterConfig {
            mode: MeterMode::ActiveTimeout { seconds },
            reorder_window_us: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MeterStats {
    pub packets: u64,
    pub out_of_order: u64,
}

struct SegmentState {
    initiator: (IpAddr, u16),
    responder: (IpAddr, u16),
    protocol: Transport,
    segment_index: u32,
    open_ts_us: i64,
    max_ts_us: i64,
    fwd_sizes: Vec<u32>,
    bwd_sizes: Vec<u32>,
    fwd_ts_us: Vec<i64>,
    bwd_ts_us: Vec<i64>,
}

impl SegmentState {
    fn open(packet: &PacketRecord, segment_index: u32) -> Self {
        SegmentState {
            initiator: (packet.src_ip, packet.src_port),
            responder: (packet.dst_ip, packet.dst_port),
            protocol: packet.protocol,
            segment_index,
            open_ts_us: packet.ts_us,
            max_ts_us: packet.ts_us,
            fwd_sizes: Vec::new(),
            bwd_sizes: Vec::new(),
            fwd_ts_us: Vec::new(),
            bwd_ts_us: Vec::new(),
        }
    }

    fn push(&mut self, packet: &PacketRecord) {
        if (packet.src_ip, packet.src_port) == self.initiator {
            self.fwd_sizes.push(packet.payload_len);
            self.fwd_ts_us.push(packet.ts_us);
        } else {
            self.bwd_sizes.push(packet.payload_len);
            self.bwd_ts_us.push(packet.ts_us);
        }
        self.max_ts_us = self.max_ts_us.max(packet.ts_us);
    }

    fn into_flow(self, file: &str, label: Label, category: Category) -> Flow {
        Flow {
            key: FlowKey {
                ip_a: self.initiator.0,
                port_a: self.initiator.1,
                ip_b: self.responder.0,
                port_b: self.responder.1,
                protocol: self.protocol,
            },
            file: file.to_string(),
            segment_index: self.segment_index,
            label,
            category,
            fwd_sizes: self.fwd_sizes,
            bwd_sizes: self.bwd_sizes,
            fwd_ts_us: self.fwd_ts_us,
            bwd_ts_us: self.bwd_ts_us,
            first_ts_us: self.open_ts_us,
            last_ts_us: self.max_ts_us,
        }
    }
}

/// Undirected lookup key: endpoints ordered so both directions collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct MapKey {
    lo: (IpAddr, u16),
    hi: (IpAddr, u16),
    protocol: Transport,
}

impl MapKey {
    fn of(packet: &PacketRecord) -> Self {
        let a = (packet.src_ip, packet.src_port);
        let b = (packet.dst_ip, packet.dst_port);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        MapKey {
            lo,
            hi,
            protocol: packet.protocol,
        }
    }
}

/// Assemble the packets of one capture file into flow segments.
///
/// Packets are expected time-sorted; violations beyond the reorder window
/// are counted but still metered. Output is sorted by (key, segment).
pub fn meter(
    packets: impl IntoIterator<Item = PacketRecord>,
    config: &MeterConfig,
    file: &str,
    label: Label,
    category: Category,
) -> Result<(Vec<Flow>, MeterStats)> {
    let timeout_us = match config.mode {
        MeterMode::Complete => None,
        MeterMode::ActiveTimeout { seconds } => {
            if seconds == 0 {
                return Err(Error::Config("active timeout must be > 0 seconds".into()));
            }
            Some(i64::from(seconds) * 1_000_000)
        }
    };

    let mut stats = MeterStats::default();
    let mut table: HashMap<MapKey, SegmentState> = HashMap::new();
    let mut closed: Vec<Flow> = Vec::new();
    let mut newest_ts = i64::MIN;

    for packet in packets {
        stats.packets += 1;
        if newest_ts != i64::MIN && packet.ts_us + config.reorder_window_us < newest_ts {
            stats.out_of_order += 1;
        }
        newest_ts = newest_ts.max(packet.ts_us);

        let map_key = MapKey::of(&packet);
        match table.get_mut(&map_key) {
            None => {
                let mut state = SegmentState::open(&packet, 0);
                state.push(&packet);
                table.insert(map_key, state);
            }
            Some(state) => {
                if let Some(t_us) = timeout_us {
                    if packet.ts_us - state.open_ts_us > t_us {
                        let next = SegmentState::open(&packet, state.segment_index + 1);
                        let done = std::mem::replace(state, next);
                        closed.push(done.into_flow(file, label, category));
                    }
                }
                state.push(&packet);
            }
        }
    }

    closed.extend(
        table
            .into_values()
            .map(|state| state.into_flow(file, label, category)),
    );
    closed.sort_by(|a, b| (a.key, a.segment_index).cmp(&(b.key, b.segment_index)));
    Ok((closed, stats))
}

// ---------------------------------------------------------------------------
// Short-flow filtering
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterSummary {
    pub min_packets: usize,
    pub retained: u64,
    pub removed: u64,
    /// removed / (retained + removed) x 100; 0 when the input is empty.
    pub reduction_pct: f64,
    pub per_category: Vec<FilterCategoryRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterCategoryRow {
    pub category: Category,
    pub retained: u64,
    pub removed: u64,
    pub reduction_pct: f64,
}

/// Retain flows with at least `min_packets` packets.
pub fn filter_min_packets(flows: Vec<Flow>, min_packets: usize) -> Result<(Vec<Flow>, FilterSummary)> {
    if min_packets < 1 {
        return Err(Error::Argument("min_packets must be >= 1".into()));
    }
    let mut retained = Vec::with_capacity(flows.len());
    let mut kept = [0u64; Category::ALL.len()];
    let mut dropped = [0u64; Category::ALL.len()];
    for flow in flows {
        let idx = Category::ALL
            .iter()
            .position(|c| *c == flow.category)
            .unwrap();
        if flow.packet_count() >= min_packets {
            kept[idx] += 1;
            retained.push(flow);
        } else {
            dropped[idx] += 1;
        }
    }

    let per_category = Category::ALL
        .iter()
        .enumerate()
        .map(|(i, &category)| FilterCategoryRow {
            category,
            retained: kept[i],
            removed: dropped[i],
            reduction_pct: percentage(dropped[i], kept[i] + dropped[i]),
        })
        .collect();
    let total_kept: u64 = kept.iter().sum();
    let total_dropped: u64 = dropped.iter().sum();
    let summary = FilterSummary {
        min_packets,
        retained: total_kept,
        removed: total_dropped,
        reduction_pct: percentage(total_dropped, total_kept + total_dropped),
        per_category,
    };
    Ok((retained, summary))
}

fn percentage(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 / whole as f64 * 100.0
    }
}

// ---------------------------------------------------------------------------
// File-name labeling
// ---------------------------------------------------------------------------

/// One labeling rule. The pattern is a case-insensitive match against the
/// file name; `*` matches any run of characters, and the pattern itself
/// may occur anywhere in the name (implicit `*` on both ends).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRule {
    pub pattern: String,
    pub label: Label,
    pub category: Category,
}

/// Ordered rule list mapping capture file names to (label, category).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMapping {
    rules: Vec<LabelRule>,
}

impl LabelMapping {
    pub fn new(rules: Vec<LabelRule>) -> Result<Self> {
        if rules.is_empty() {
            return Err(Error::Config("label mapping has no rules".into()));
        }
        Ok(LabelMapping { rules })
    }

    /// Rules for the `vpn_`/`nonvpn_` file naming convention with
    /// per-application category keywords.
    pub fn standard() -> Self {
        let groups: [(&[&str], Category); 5] = [
            (&["chat", "icq", "aim"], Category::Chat),
            (
                &["file", "sftp", "rsync", "scp"],
                Category::FileTransfer,
            ),
            (&["ssh", "rdp", "command"], Category::CommandControl),
            (
                &["stream", "vimeo", "netflix", "youtube"],
                Category::Streaming,
            ),
            (&["voip", "skype", "zoiper"], Category::Voip),
        ];
        let mut rules = Vec::new();
        for (prefix, label) in [("vpn_", Label::Vpn), ("nonvpn_", Label::NonVpn)] {
            for (keywords, category) in groups {
                for keyword in keywords {
                    rules.push(LabelRule {
                        pattern: format!("{prefix}*{keyword}"),
                        label,
                        category,
                    });
                }
            }
        }
        LabelMapping { rules }
    }

    pub fn rules(&self) -> &[LabelRule] {
        &self.rules
    }

    /// First matching rule wins. Returns `(nonvpn, unknown, false)` when
    /// nothing matches; callers surface the unmatched case as a warning.
    pub fn label_file(&self, file_name: &str) -> (Label, Category, bool) {
        let name = file_name.to_ascii_lowercase();
        for rule in &self.rules {
            if glob_contains(&name, &rule.pattern.to_ascii_lowercase()) {
                return (rule.label, rule.category, true);
            }
        }
        (Label::NonVpn, Category::Unknown, false)
    }
}

/// `nonvpn_` would also match a bare `vpn_` substring rule, so matching is
/// segment-ordered: every `*`-separated piece must appear in order, and a
/// piece at the pattern start must either start the name or follow a
/// non-alphanumeric boundary.
fn glob_contains(name: &str, pattern: &str) -> bool {
    let mut pos = 0;
    for (i, piece) in pattern.split('*').enumerate() {
        if piece.is_empty() {
            continue;
        }
        match find_from(name, piece, pos, i == 0) {
            Some(end) => pos = end,
            None => return false,
        }
    }
    true
}

fn find_from(name: &str, piece: &str, start: usize, anchored_word: bool) -> Option<usize> {
    let mut search_at = start;
    while let Some(rel) = name.get(search_at..).and_then(|s| s.find(piece)) {
        let at = search_at + rel;
        let boundary_ok = !anchored_word
            || at == 0
            || !name.as_bytes()[at - 1].is_ascii_alphanumeric();
        if boundary_ok {
            return Some(at + piece.len());
        }
        search_at = at + 1;
    }
    None
}

/// Label and category for one capture file name.
pub fn label_flow(file_name: &str, mapping: &LabelMapping) -> (Label, Category, bool) {
    mapping.label_file(file_name)
}

// ---------------------------------------------------------------------------
// Flow count reporting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowCountReport {
    pub rows: Vec<FlowCountRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowCountRow {
    pub category: Category,
    pub nonvpn: u64,
    pub vpn: u64,
    pub total: u64,
    pub filtered_total: u64,
    pub reduction_pct: f64,
}

/// Per-category counts before and after short-flow filtering.
pub fn flow_count_report(before: &[Flow], after: &[Flow]) -> FlowCountReport {
    let rows = Category::ALL
        .iter()
        .map(|&category| {
            let nonvpn = before
                .iter()
                .filter(|f| f.category == category && f.label == Label::NonVpn)
                .count() as u64;
            let vpn = before
                .iter()
                .filter(|f| f.category == category && f.label == Label::Vpn)
                .count() as u64;
            let total = nonvpn + vpn;
            let filtered_total = after.iter().filter(|f| f.category == category).count() as u64;
            FlowCountRow {
                category,
                nonvpn,
                vpn,
                total,
                filtered_total,
                reduction_pct: percentage(total - filtered_total.min(total), total),
            }
        })
        .collect();
    FlowCountReport { rows }
}

// ---------------------------------------------------------------------------
// Flow table file contract
// ---------------------------------------------------------------------------

/// One row of the flow table CSV: the metering -> feature-extraction
/// contract. Timestamps are not part of the contract; only sizes matter
/// downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRow {
    pub file: String,
    pub key: String,
    pub segment: u32,
    pub label: Label,
    pub category: Category,
    pub pkt_count: u64,
    pub duration_s: f64,
    pub fwd_sizes: Vec<u32>,
    pub bwd_sizes: Vec<u32>,
}

impl From<&Flow> for FlowRow {
    fn from(flow: &Flow) -> Self {
        FlowRow {
            file: flow.file.clone(),
            key: flow.key.to_string(),
            segment: flow.segment_index,
            label: flow.label,
            category: flow.category,
            pkt_count: flow.packet_count() as u64,
            duration_s: flow.duration_seconds(),
            fwd_sizes: flow.fwd_sizes.clone(),
            bwd_sizes: flow.bwd_sizes.clone(),
        }
    }
}

const FLOW_CSV_HEADER: [&str; 9] = [
    "file",
    "key",
    "segment",
    "label",
    "category",
    "pkt_count",
    "duration_s",
    "fwd_sizes",
    "bwd_sizes",
];

pub fn write_flow_csv(flows: &[Flow], path: &Path) -> Result<()> {
    let file = tableio::write_table(path, FLOW_TABLE_SCHEMA)?;
    let mut writer = csv::Writer::from_writer(file);
    writer
        .write_record(FLOW_CSV_HEADER)
        .map_err(|e| Error::data(path, e.to_string()))?;
    for flow in flows {
        let row = FlowRow::from(flow);
        writer
            .write_record([
                row.file.as_str(),
                row.key.as_str(),
                &row.segment.to_string(),
                &row.label.to_string(),
                &row.category.to_string(),
                &row.pkt_count.to_string(),
                &row.duration_s.to_string(),
                &serde_json::to_string(&row.fwd_sizes).unwrap(),
                &serde_json::to_string(&row.bwd_sizes).unwrap(),
            ])
            .map_err(|e| Error::data(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_flow_csv(path: &Path) -> Result<Vec<FlowRow>> {
    let reader = tableio::open_table(path, FLOW_TABLE_SCHEMA)?;
    let mut csv_reader = csv::Reader::from_reader(reader);
    let headers = csv_reader
        .headers()
        .map_err(|e| Error::data(path, e.to_string()))?
        .clone();
    if headers.iter().ne(FLOW_CSV_HEADER) {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            expected: FLOW_CSV_HEADER.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut rows = Vec::new();
    for record in csv_reader.records() {
        let record = record.map_err(|e| Error::data(path, e.to_string()))?;
        let field = |i: usize| record.get(i).unwrap_or_default();
        let row = FlowRow {
            file: field(0).to_string(),
            key: field(1).to_string(),
            segment: field(2)
                .parse()
                .map_err(|_| Error::data(path, format!("bad segment `{}`", field(2))))?,
            label: field(3).parse()?,
            category: field(4).parse()?,
            pkt_count: field(5)
                .parse()
                .map_err(|_| Error::data(path, format!("bad pkt_count `{}`", field(5))))?,
            duration_s: field(6)
                .parse()
                .map_err(|_| Error::data(path, format!("bad duration `{}`", field(6))))?,
            fwd_sizes: serde_json::from_str(field(7))
                .map_err(|e| Error::data(path, format!("bad fwd_sizes: {e}")))?,
            bwd_sizes: serde_json::from_str(field(8))
                .map_err(|e| Error::data(path, format!("bad bwd_sizes: {e}")))?,
        };
        rows.push(row);
    }
    Ok(rows)
}

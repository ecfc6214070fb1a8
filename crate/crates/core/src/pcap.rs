//! Classic pcap parsing into per-packet records.
//!
//! Only TCP/UDP packets whose IP fragment offset is zero become records;
//! everything else is counted in a per-file [`SkipSummary`]. The payload
//! size is the transport payload: IP total length minus IP and TCP headers
//! for TCP, the UDP length field minus 8 for UDP. Link types Ethernet
//! (with a single optional 802.1Q tag) and raw IP are supported.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC_US: u32 = 0xa1b2_c3d4;
const MAGIC_NS: u32 = 0xa1b2_3c4d;
const LINKTYPE_ETHERNET: u32 = 1;
const LINKTYPE_RAW_IP: u32 = 101;

/// Transport protocol of a parsed packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    Tcp,
    Udp,
    Other,
}

impl std::fmt::Display for Transport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Transport::Tcp => write!(f, "tcp"),
            Transport::Udp => write!(f, "udp"),
            Transport::Other => write!(f, "other"),
        }
    }
}

/// One parsed TCP/UDP packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketRecord {
    /// Microseconds since the epoch.
    pub ts_us: i64,
    pub src_ip: IpAddr,
    pub dst_ip: IpAddr,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: Transport,
    /// Transport-layer payload size in bytes.
    pub payload_len: u32,
    /// Always true for yielded records; fragments with nonzero offset are
    /// dropped during parsing.
    pub frag_offset_zero: bool,
}

impl PacketRecord {
    pub fn ts_seconds(&self) -> f64 {
        self.ts_us as f64 * 1e-6
    }
}

/// Keep a packet iff its IP fragment offset is zero (first fragment or
/// unfragmented). The same rule is applied to the IPv6 fragment extension
/// header.
pub fn fragment_policy(frag_offset: u16) -> bool {
    frag_offset == 0
}

/// Per-file accounting of parsed vs skipped packets.
///
/// `packets_kept + packets_skipped == packets_total` always holds, and
/// `packets_skipped` is the sum of the per-reason counters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipSummary {
    pub file: String,
    pub packets_total: u64,
    pub packets_kept: u64,
    pub packets_skipped: u64,
    pub skipped_non_ip: u64,
    pub skipped_non_tcp_udp: u64,
    pub skipped_fragment: u64,
    pub skipped_truncated: u64,
    pub skipped_malformed: u64,
}

impl SkipSummary {
    fn record_skip(&mut self, reason: SkipReason) {
        self.packets_skipped += 1;
        match reason {
            SkipReason::NonIp => self.skipped_non_ip += 1,
            SkipReason::NonTcpUdp => self.skipped_non_tcp_udp += 1,
            SkipReason::Fragment => self.skipped_fragment += 1,
            SkipReason::Truncated => self.skipped_truncated += 1,
            SkipReason::Malformed => self.skipped_malformed += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SkipReason {
    NonIp,
    NonTcpUdp,
    Fragment,
    Truncated,
    Malformed,
}

enum Outcome {
    Keep(PacketRecord),
    Skip(SkipReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LinkType {
    Ethernet,
    RawIp,
}

/// Streaming reader over one classic pcap file.
pub struct PcapReader<R: Read> {
    src: R,
    path: PathBuf,
    big_endian: bool,
    nanos: bool,
    link: LinkType,
    summary: SkipSummary,
    done: bool,
}

impl PcapReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufReader::new(file), path)
    }
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut src: R, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut header = [0u8; 24];
        src.read_exact(&mut header)
            .map_err(|_| Error::pcap(&path, "file shorter than the pcap global header"))?;

        let magic_le = u32::from_le_bytes([header[0], header[1], header[2], header[3]]);
        let magic_be = u32::from_be_bytes([header[0], header[1], header[2], header[3]]);
        let (big_endian, nanos) = match (magic_le, magic_be) {
            (MAGIC_US, _) => (false, false),
            (MAGIC_NS, _) => (false, true),
            (_, MAGIC_US) => (true, false),
            (_, MAGIC_NS) => (true, true),
            _ => {
                return Err(Error::pcap(
                    &path,
                    format!("bad magic 0x{magic_be:08x}, not a classic pcap file"),
                ))
            }
        };

        let read_u32 = |bytes: [u8; 4]| {
            if big_endian {
                u32::from_be_bytes(bytes)
            } else {
                u32::from_le_bytes(bytes)
            }
        };
        let network = read_u32([header[20], header[21], header[22], header[23]]);
        let link = match network {
            LINKTYPE_ETHERNET => LinkType::Ethernet,
            LINKTYPE_RAW_IP => LinkType::RawIp,
            other => {
                return Err(Error::pcap(
                    &path,
                    format!("unsupported link type {other} (expected Ethernet=1 or raw IP=101)"),
                ))
            }
        };

        Ok(PcapReader {
            src,
            path: path.clone(),
            big_endian,
            nanos,
            link,
            summary: SkipSummary {
                file: path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string()),
                ..SkipSummary::default()
            },
            done: false,
        })
    }

    pub fn skip_summary(&self) -> &SkipSummary {
        &self.summary
    }

    pub fn into_skip_summary(self) -> SkipSummary {
        self.summary
    }

    fn read_u32(&self, bytes: [u8; 4]) -> u32 {
        if self.big_endian {
            u32::from_be_bytes(bytes)
        } else {
            u32::from_le_bytes(bytes)
        }
    }

    /// Next kept packet, or `None` at end of file. Skipped packets are
    /// counted and never surface here; a record truncated mid-header ends
    /// the file with a truncation count rather than an error.
    pub fn next_record(&mut self) -> Result<Option<PacketRecord>> {
        loop {
            if self.done {
                return Ok(None);
            }

            let mut rec_header = [0u8; 16];
            match read_exact_or_eof(&mut self.src, &mut rec_header) {
                Ok(ReadStatus::Eof) => {
                    self.done = true;
                    return Ok(None);
                }
                Ok(ReadStatus::Partial) => {
                    self.done = true;
                    self.summary.packets_total += 1;
                    self.summary.record_skip(SkipReason::Truncated);
                    return Ok(None);
                }
                Ok(ReadStatus::Full) => {}
                Err(e) => return Err(Error::io(&self.path, e)),
            }

            let ts_sec = self.read_u32([rec_header[0], rec_header[1], rec_header[2], rec_header[3]]);
            let ts_sub = self.read_u32([rec_header[4], rec_header[5], rec_header[6], rec_header[7]]);
            let incl_len =
                self.read_u32([rec_header[8], rec_header[9], rec_header[10], rec_header[11]]);

            let mut data = vec![0u8; incl_len as usize];
            match read_exact_or_eof(&mut self.src, &mut data) {
                Ok(ReadStatus::Full) => {}
                Ok(_) => {
                    self.done = true;
                    self.summary.packets_total += 1;
                    self.summary.record_skip(SkipReason::Truncated);
                    return Ok(None);
                }
                Err(e) => return Err(Error::io(&self.path, e)),
            }

            self.summary.packets_total += 1;
            let micros = if self.nanos { ts_sub / 1000 } else { ts_sub };
            let ts_us = i64::from(ts_sec) * 1_000_000 + i64::from(micros);

            match parse_frame(self.link, ts_us, &data) {
                Outcome::Keep(record) => {
                    self.summary.packets_kept += 1;
                    return Ok(Some(record));
                }
                Outcome::Skip(reason) => self.summary.record_skip(reason),
            }
        }
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<PacketRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record().transpose()
    }
}

enum ReadStatus {
    Full,
    Partial,
    Eof,
}

fn read_exact_or_eof<R: Read>(src: &mut R, buf: &mut [u8]) -> std::io::Result<ReadStatus> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = src.read(&mut buf[filled..])?;
        if n == 0 {
            return Ok(if filled == 0 {
                ReadStatus::Eof
            } else {
                ReadStatus::Partial
            });
        }
        filled += n;
    }
    Ok(ReadStatus::Full)
}

/// Parse a whole file, collecting records and the skip summary.
pub fn read_pcap(path: impl AsRef<Path>) -> Result<(Vec<PacketRecord>, SkipSummary)> {
    let mut reader = PcapReader::open(path)?;
    let mut records = Vec::new();
    while let Some(record) = reader.next_record()? {
        records.push(record);
    }
    Ok((records, reader.into_skip_summary()))
}

fn parse_frame(link: LinkType, ts_us: i64, data: &[u8]) -> Outcome {
    match link {
        LinkType::Ethernet => parse_ethernet(ts_us, data),
        LinkType::RawIp => parse_ip(ts_us, data),
    }
}

fn parse_ethernet(ts_us: i64, data: &[u8]) -> Outcome {
    if data.len() < 14 {
        return Outcome::Skip(SkipReason::Truncated);
    }
    let mut ethertype = u16::from_be_bytes([data[12], data[13]]);
    let mut offset = 14;
    // Unwrap a single 802.1Q tag.
    if ethertype == 0x8100 {
        if data.len() < 18 {
            return Outcome::Skip(SkipReason::Truncated);
        }
        ethertype = u16::from_be_bytes([data[16], data[17]]);
        offset = 18;
    }
    match ethertype {
        0x0800 => parse_ipv4(ts_us, &data[offset..]),
        0x86DD => parse_ipv6(ts_us, &data[offset..]),
        _ => Outcome::Skip(SkipReason::NonIp),
    }
}

fn parse_ip(ts_us: i64, data: &[u8]) -> Outcome {
    match data.first().map(|b| b >> 4) {
        Some(4) => parse_ipv4(ts_us, data),
        Some(6) => parse_ipv6(ts_us, data),
        _ => Outcome::Skip(SkipReason::NonIp),
    }
}

fn parse_ipv4(ts_us: i64, data: &[u8]) -> Outcome {
    if data.len() < 20 {
        return Outcome::Skip(SkipReason::Truncated);
    }
    if data[0] >> 4 != 4 {
        return Outcome::Skip(SkipReason::Malformed);
    }
    let ihl = usize::from(data[0] & 0x0f) * 4;
    if ihl < 20 {
        return Outcome::Skip(SkipReason::Malformed);
    }
    if data.len() < ihl {
        return Outcome::Skip(SkipReason::Truncated);
    }

    let total_len = u32::from(u16::from_be_bytes([data[2], data[3]]));
    let flags_frag = u16::from_be_bytes([data[6], data[7]]);
    let frag_offset = flags_frag & 0x1fff;
    if !fragment_policy(frag_offset) {
        return Outcome::Skip(SkipReason::Fragment);
    }

    let src_ip = IpAddr::from([data[12], data[13], data[14], data[15]]);
    let dst_ip = IpAddr::from([data[16], data[17], data[18], data[19]]);
    let transport = &data[ihl..];

    match data[9] {
        6 => parse_tcp(ts_us, src_ip, dst_ip, transport, |tcp_header_len| {
            total_len
                .checked_sub(ihl as u32)
                .and_then(|v| v.checked_sub(tcp_header_len))
        }),
        17 => parse_udp(ts_us, src_ip, dst_ip, transport),
        _ => Outcome::Skip(SkipReason::NonTcpUdp),
    }
}

fn parse_ipv6(ts_us: i64, data: &[u8]) -> Outcome {
    if data.len() < 40 {
        return Outcome::Skip(SkipReason::Truncated);
    }
    if data[0] >> 4 != 6 {
        return Outcome::Skip(SkipReason::Malformed);
    }
    let ip_payload_len = u32::from(u16::from_be_bytes([data[4], data[5]]));
    let src_bytes: [u8; 16] = data[8..24].try_into().unwrap();
    let dst_bytes: [u8; 16] = data[24..40].try_into().unwrap();
    let src_ip = IpAddr::from(src_bytes);
    let dst_ip = IpAddr::from(dst_bytes);

    let mut next_header = data[6];
    let mut offset = 40usize;
    // Walk extension headers until a transport header (or give up).
    loop {
        match next_header {
            // hop-by-hop, routing, destination options
            0 | 43 | 60 => {
                if data.len() < offset + 8 {
                    return Outcome::Skip(SkipReason::Truncated);
                }
                next_header = data[offset];
                offset += (usize::from(data[offset + 1]) + 1) * 8;
            }
            // fragment header: first-fragment-only policy applies
            44 => {
                if data.len() < offset + 8 {
                    return Outcome::Skip(SkipReason::Truncated);
                }
                let frag_offset = u16::from_be_bytes([data[offset + 2], data[offset + 3]]) >> 3;
                if !fragment_policy(frag_offset) {
                    return Outcome::Skip(SkipReason::Fragment);
                }
                next_header = data[offset];
                offset += 8;
            }
            6 => {
                if data.len() < offset {
                    return Outcome::Skip(SkipReason::Truncated);
                }
                let ext_len = (offset - 40) as u32;
                return parse_tcp(ts_us, src_ip, dst_ip, &data[offset..], |tcp_header_len| {
                    ip_payload_len
                        .checked_sub(ext_len)
                        .and_then(|v| v.checked_sub(tcp_header_len))
                });
            }
            17 => {
                if data.len() < offset {
                    return Outcome::Skip(SkipReason::Truncated);
                }
                return parse_udp(ts_us, src_ip, dst_ip, &data[offset..]);
            }
            _ => return Outcome::Skip(SkipReason::NonTcpUdp),
        }
    }
}

fn parse_tcp(
    ts_us: i64,
    src_ip: IpAddr,
    dst_ip: IpAddr,
    transport: &[u8],
    payload_from_header_len: impl Fn(u32) -> Option<u32>,
) -> Outcome {
    if transport.len() < 20 {
        return Outcome::Skip(SkipReason::Truncated);
    }
    let data_offset = u32::from(transport[12] >> 4) * 4;
    if data_offset < 20 {
        return Outcome::Skip(SkipReason::Malformed);
    }
    if transport.len() < data_offset as usize {
        return Outcome::Skip(SkipReason::Truncated);
    }
    let Some(payload_len) = payload_from_header_len(data_offset) else {
        return Outcome::Skip(SkipReason::Malformed);
    };
    Outcome::Keep(PacketRecord {
        ts_us,
        src_ip,
        dst_ip,
        src_port: u16::from_be_bytes([transport[0], transport[1]]),
        dst_port: u16::from_be_bytes([transport[2], transport[3]]),
        protocol: Transport::Tcp,
        payload_len,
        frag_offset_zero: true,
    })
}

fn parse_udp(ts_us: i64, src_ip: IpAddr, dst_ip: IpAddr, transport: &[u8]) -> Outcome {
    if transport.len() < 8 {
        return Outcome::Skip(SkipReason::Truncated);
    }
    let udp_len = u16::from_be_bytes([transport[4], transport[5]]);
    if udp_len < 8 {
        return Outcome::Skip(SkipReason::Malformed);
    }
    Outcome::Keep(PacketRecord {
        ts_us,
        src_ip,
        dst_ip,
        src_port: u16::from_be_bytes([transport[0], transport[1]]),
        dst_port: u16::from_be_bytes([transport[2], transport[3]]),
        protocol: Transport::Udp,
        payload_len: u32::from(udp_len) - 8,
        frag_offset_zero: true,
    })
}

// ---------------------------------------------------------------------------
// Writing (synthetic captures and test fixtures)
// ---------------------------------------------------------------------------

/// Writer for classic pcap files (little-endian, microsecond timestamps,
/// Ethernet link type).
pub struct PcapWriter<W: Write> {
    sink: W,
}

impl PcapWriter<std::io::BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Self::new(std::io::BufWriter::new(file), path)
    }
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut sink: W, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut header = Vec::with_capacity(24);
        header.extend_from_slice(&MAGIC_US.to_le_bytes());
        header.extend_from_slice(&2u16.to_le_bytes()); // version major
        header.extend_from_slice(&4u16.to_le_bytes()); // version minor
        header.extend_from_slice(&0i32.to_le_bytes()); // thiszone
        header.extend_from_slice(&0u32.to_le_bytes()); // sigfigs
        header.extend_from_slice(&65535u32.to_le_bytes()); // snaplen
        header.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
        sink.write_all(&header).map_err(|e| Error::io(path, e))?;
        Ok(PcapWriter { sink })
    }

    pub fn write_frame(&mut self, ts_us: i64, frame: &[u8]) -> std::io::Result<()> {
        let ts_sec = (ts_us / 1_000_000) as u32;
        let ts_usec = (ts_us % 1_000_000) as u32;
        self.sink.write_all(&ts_sec.to_le_bytes())?;
        self.sink.write_all(&ts_usec.to_le_bytes())?;
        self.sink.write_all(&(frame.len() as u32).to_le_bytes())?;
        self.sink.write_all(&(frame.len() as u32).to_le_bytes())?;
        self.sink.write_all(frame)
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.sink.flush()
    }
}

/// Ethernet/IPv4/UDP frame carrying `payload_len` zero bytes.
pub fn build_udp_frame(
    src_ip: [u8; 4],
    dst_ip: [u8; 4],
    src_port: u16,
    dst_port: u16,
    payload_len: u16,
) -> Vec<u8> {
    let udp_len = 8 + payload_len;
    let ip_total = 20 + udp_len;
    let mut frame = ethernet_header();
    frame.extend_from_slice(&ipv4_header(src_ip, dst_ip, 17, ip_total, 0));
    frame.extend_from_slice(&src_port.to_be_bytes());
    frame.extend_from_slice(&dst_port.to_be_bytes());
    frame.extend_from_slice(&udp_len.to_be_bytes());
    frame.extend_from_slice(&0u16.to_be_bytes()); // checksum unused offline
    frame.extend(std::iter::repeat(0u8).take(usize::from(payload_len)));
    frame
}

/// Ethernet/IPv4/TCP frame (data offset 5) carrying `payload_len` zero bytes.
pub fn build_tcp_frame(
    src_ip: [u8; 4],
    dst_ip: [u8; 4],
    src_port: u16,
    dst_port: u16,
    payload_len: u16,
) -> Vec<u8> {
    let ip_total = 20 + 20 + payload_len;
    let mut frame = ethernet_header();
    frame.extend_from_slice(&ipv4_header(src_ip, dst_ip, 6, ip_total, 0));
    frame.extend_from_slice(&src_port.to_be_bytes());
    frame.extend_from_slice(&dst_port.to_be_bytes());
    frame.extend_from_slice(&[0u8; 8]); // seq + ack
    frame.push(5 << 4); // data offset 5 words
    frame.push(0x10); // ACK flag
    frame.extend_from_slice(&[0u8; 6]); // window, checksum, urgent
    frame.extend(std::iter::repeat(0u8).take(usize::from(payload_len)));
    frame
}

fn ethernet_header() -> Vec<u8> {
    let mut header = vec![0u8; 12];
    header.extend_from_slice(&0x0800u16.to_be_bytes());
    header
}

fn ipv4_header(src: [u8; 4], dst: [u8; 4], protocol: u8, total_len: u16, frag_offset: u16) -> [u8; 20] {
    let mut header = [0u8; 20];
    header[0] = 0x45; // version 4, IHL 5
    header[2..4].copy_from_slice(&total_len.to_be_bytes());
    header[6..8].copy_from_slice(&(frag_offset & 0x1fff).to_be_bytes());
    header[8] = 64; // ttl
    header[9] = protocol;
    header[12..16].copy_from_slice(&src);
    header[16..20].copy_from_slice(&dst);
    header
}

#[cfg(test)]
mod tests {
    use super::*;

    fn capture_with_frames(frames: &[(i64, Vec<u8>)]) -> Vec<u8> {
        let mut buf = Vec::new();
        {
            let mut writer = PcapWriter::new(&mut buf, "mem").unwrap();
            for (ts, frame) in frames {
                writer.write_frame(*ts, frame).unwrap();
            }
        }
        buf
    }

    fn parse_bytes(bytes: &[u8]) -> (Vec<PacketRecord>, SkipSummary) {
        let mut reader = PcapReader::new(bytes, "mem.pcap").unwrap();
        let mut records = Vec::new();
        while let Some(r) = reader.next_record().unwrap() {
            records.push(r);
        }
        (records, reader.into_skip_summary())
    }

    #[test]
    fn udp_payload_is_length_field_minus_eight() {
        let frame = build_udp_frame([10, 0, 0, 1], [10, 0, 0, 2], 5000, 53, 100);
        let bytes = capture_with_frames(&[(1_000_000, frame)]);
        let (records, summary) = parse_bytes(&bytes);
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].payload_len, 100);
        assert_eq!(records[0].protocol, Transport::Udp);
        assert_eq!(records[0].ts_us, 1_000_000);
        assert_eq!(summary.packets_kept, 1);
        assert_eq!(summary.packets_skipped, 0);
    }

    #[test]
    fn empty_capture_yields_nothing() {
        let bytes = capture_with_frames(&[]);
        let (records, summary) = parse_bytes(&bytes);
        assert!(records.is_empty());
        assert_eq!(summary.packets_total, 0);
        assert_eq!(summary.packets_skipped, 0);
    }

    #[test]
    fn tcp_syn_without_payload() {
        // IP total 40, IP header 20, data offset 5 -> payload 0.
        let frame = build_tcp_frame([192, 168, 0, 1], [192, 168, 0, 2], 44000, 443, 0);
        let bytes = capture_with_frames(&[(0, frame)]);
        let (records, _) = parse_bytes(&bytes);
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].payload_len, 0);
        assert_eq!(records[0].protocol, Transport::Tcp);
    }

    #[test]
    fn fragment_policy_keeps_only_offset_zero() {
        assert!(fragment_policy(0));
        assert!(!fragment_policy(185));

        // First fragment (offset 0, MF set) is kept; later fragment dropped.
        let mut first = ethernet_header();
        let mut ip = ipv4_header([10, 0, 0, 1], [10, 0, 0, 2], 17, 20 + 16, 0);
        ip[6] = 0x20; // MF flag, offset 0
        first.extend_from_slice(&ip);
        first.extend_from_slice(&5000u16.to_be_bytes());
        first.extend_from_slice(&53u16.to_be_bytes());
        first.extend_from_slice(&16u16.to_be_bytes());
        first.extend_from_slice(&[0u8; 10]);

        let mut later = ethernet_header();
        later.extend_from_slice(&ipv4_header([10, 0, 0, 1], [10, 0, 0, 2], 17, 36, 185));
        later.extend_from_slice(&[0u8; 16]);

        let bytes = capture_with_frames(&[(0, first), (1, later)]);
        let (records, summary) = parse_bytes(&bytes);
        assert_eq!(records.len(), 1);
        assert_eq!(summary.skipped_fragment, 1);
        assert_eq!(summary.packets_total, 2);
    }

    #[test]
    fn non_ip_and_non_transport_are_counted() {
        let mut arp = vec![0u8; 12];
        arp.extend_from_slice(&0x0806u16.to_be_bytes());
        arp.extend_from_slice(&[0u8; 28]);

        let mut icmp = ethernet_header();
        icmp.extend_from_slice(&ipv4_header([10, 0, 0, 1], [10, 0, 0, 2], 1, 28, 0));
        icmp.extend_from_slice(&[8, 0, 0, 0, 0, 0, 0, 0]);

        let udp = build_udp_frame([10, 0, 0, 1], [10, 0, 0, 2], 1, 2, 0);
        let bytes = capture_with_frames(&[(0, arp), (1, icmp), (2, udp)]);
        let (records, summary) = parse_bytes(&bytes);
        assert_eq!(records.len(), 1);
        assert_eq!(summary.skipped_non_ip, 1);
        assert_eq!(summary.skipped_non_tcp_udp, 1);
        assert_eq!(
            summary.packets_kept + summary.packets_skipped,
            summary.packets_total
        );
    }

    #[test]
    fn malformed_udp_length_rejected() {
        let mut frame = ethernet_header();
        frame.extend_from_slice(&ipv4_header([10, 0, 0, 1], [10, 0, 0, 2], 17, 28, 0));
        frame.extend_from_slice(&1u16.to_be_bytes());
        frame.extend_from_slice(&2u16.to_be_bytes());
        frame.extend_from_slice(&4u16.to_be_bytes()); // UDP length < 8
        frame.extend_from_slice(&[0u8; 2]);
        let bytes = capture_with_frames(&[(0, frame)]);
        let (records, summary) = parse_bytes(&bytes);
        assert!(records.is_empty());
        assert_eq!(summary.skipped_malformed, 1);
    }

    #[test]
    fn truncated_record_skipped_with_counter() {
        let udp = build_udp_frame([10, 0, 0, 1], [10, 0, 0, 2], 1, 2, 4);
        let mut bytes = capture_with_frames(&[(0, udp)]);
        bytes.truncate(bytes.len() - 3);
        let (records, summary) = parse_bytes(&bytes);
        assert!(records.is_empty());
        assert_eq!(summary.skipped_truncated, 1);
        assert_eq!(summary.packets_total, 1);
    }

    #[test]
    fn vlan_tag_unwrapped() {
        let udp = build_udp_frame([10, 0, 0, 9], [10, 0, 0, 8], 7, 9, 11);
        let mut tagged = udp[..12].to_vec();
        tagged.extend_from_slice(&0x8100u16.to_be_bytes());
        tagged.extend_from_slice(&0x0001u16.to_be_bytes()); // VLAN id 1
        tagged.extend_from_slice(&udp[12..]);
        let bytes = capture_with_frames(&[(0, tagged)]);
        let (records, _) = parse_bytes(&bytes);
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].payload_len, 11);
    }

    #[test]
    fn bad_magic_is_fatal() {
        let bytes = vec![0xde, 0xad, 0xbe, 0xef, 0, 0, 0, 0];
        assert!(matches!(
            PcapReader::new(bytes.as_slice(), "x.pcap"),
            Err(Error::Pcap { .. })
        ));
    }

    #[test]
    fn unsupported_link_type_is_fatal() {
        let mut bytes = capture_with_frames(&[]);
        bytes[20] = 105; // 802.11
        let err = PcapReader::new(bytes.as_slice(), "x.pcap").unwrap_err();
        assert!(err.to_string().contains("unsupported link type"));
    }

    #[test]
    fn big_endian_and_nanosecond_variants() {
        let udp = build_udp_frame([1, 1, 1, 1], [2, 2, 2, 2], 10, 20, 3);

        // Big-endian microsecond header.
        let mut be = Vec::new();
        be.extend_from_slice(&MAGIC_US.to_be_bytes());
        be.extend_from_slice(&2u16.to_be_bytes());
        be.extend_from_slice(&4u16.to_be_bytes());
        be.extend_from_slice(&[0u8; 8]);
        be.extend_from_slice(&LINKTYPE_ETHERNET.to_be_bytes());
        be.extend_from_slice(&7u32.to_be_bytes()); // ts_sec
        be.extend_from_slice(&5u32.to_be_bytes()); // ts_usec
        be.extend_from_slice(&(udp.len() as u32).to_be_bytes());
        be.extend_from_slice(&(udp.len() as u32).to_be_bytes());
        be.extend_from_slice(&udp);
        let (records, _) = parse_bytes(&be);
        assert_eq!(records[0].ts_us, 7_000_005);

        // Little-endian nanosecond header: sub-second field truncates to us.
        let mut ns = Vec::new();
        ns.extend_from_slice(&MAGIC_NS.to_le_bytes());
        ns.extend_from_slice(&2u16.to_le_bytes());
        ns.extend_from_slice(&4u16.to_le_bytes());
        ns.extend_from_slice(&[0u8; 8]);
        ns.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
        ns.extend_from_slice(&7u32.to_le_bytes());
        ns.extend_from_slice(&1999u32.to_le_bytes()); // 1999 ns -> 1 us
        ns.extend_from_slice(&(udp.len() as u32).to_le_bytes());
        ns.extend_from_slice(&(udp.len() as u32).to_le_bytes());
        ns.extend_from_slice(&udp);
        let (records, _) = parse_bytes(&ns);
        assert_eq!(records[0].ts_us, 7_000_001);
    }

    #[test]
    fn parsing_is_deterministic() {
        let frames: Vec<(i64, Vec<u8>)> = (0..20)
            .map(|i| {
                (
                    i64::from(i) * 1000,
                    build_udp_frame([10, 0, 0, 1], [10, 0, 0, 2], 1000 + i, 80, i),
                )
            })
            .collect();
        let bytes = capture_with_frames(&frames);
        let first = parse_bytes(&bytes);
        let second = parse_bytes(&bytes);
        assert_eq!(first, second);
    }
}

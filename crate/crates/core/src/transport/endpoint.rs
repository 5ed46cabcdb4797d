use std::io::Write;

use serde::Serialize;

use super::record::{encode_packet, frame_stream_packet, parse_record};
use super::{Packet, TransportError, TICK_MS};
use crate::sim::ChainSim;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    SimLoopback,
    RecordFile,
    Stream,
}

/// A packet sink. Packets are delivered in the order they are sent.
pub trait Transport {
    fn kind(&self) -> EndpointKind;
    fn send(&mut self, packet: &Packet) -> Result<(), TransportError>;
    fn close(&mut self);
    fn is_open(&self) -> bool;
}

/// Injects packets straight into a simulator at `tick * 5 ms`.
#[derive(Debug)]
pub struct SimLoopback {
    sim: ChainSim,
    open: bool,
    inject_times_us: Vec<u64>,
}

impl SimLoopback {
    pub fn new(sim: ChainSim) -> Self {
        Self {
            sim,
            open: true,
            inject_times_us: Vec::new(),
        }
    }

    pub fn sim(&self) -> &ChainSim {
        &self.sim
    }

    pub fn sim_mut(&mut self) -> &mut ChainSim {
        &mut self.sim
    }

    pub fn into_sim(self) -> ChainSim {
        self.sim
    }

    /// Send time of every inject call so far.
    pub fn inject_times_us(&self) -> &[u64] {
        &self.inject_times_us
    }
}

impl Transport for SimLoopback {
    fn kind(&self) -> EndpointKind {
        EndpointKind::SimLoopback
    }

    fn send(&mut self, packet: &Packet) -> Result<(), TransportError> {
        if !self.open {
            return Err(TransportError::Closed);
        }
        let t = packet.send_time_us();
        self.sim.inject_mixed(&packet.mixed(), t)?;
        self.inject_times_us.push(t);
        Ok(())
    }

    fn close(&mut self) {
        self.open = false;
    }

    fn is_open(&self) -> bool {
        self.open
    }
}

/// Writes the bit-exact record format.
#[derive(Debug)]
pub struct RecordFile<W: Write> {
    writer: W,
    open: bool,
}

impl<W: Write> RecordFile<W> {
    pub fn new(writer: W) -> Self {
        Self { writer, open: true }
    }

    pub fn into_inner(self) -> W {
        self.writer
    }
}

impl<W: Write> Transport for RecordFile<W> {
    fn kind(&self) -> EndpointKind {
        EndpointKind::RecordFile
    }

    fn send(&mut self, packet: &Packet) -> Result<(), TransportError> {
        if !self.open {
            return Err(TransportError::Closed);
        }
        self.writer.write_all(&encode_packet(packet)?)?;
        Ok(())
    }

    fn close(&mut self) {
        if self.open {
            // a flush failure here leaves nothing to report to; later sends fail as Closed
            let _ = self.writer.flush();
        }
        self.open = false;
    }

    fn is_open(&self) -> bool {
        self.open
    }
}

/// Writes length-prefixed packets to a byte stream (e.g. a TCP socket).
#[derive(Debug)]
pub struct StreamEndpoint<W: Write> {
    writer: W,
    open: bool,
}

impl<W: Write> StreamEndpoint<W> {
    pub fn new(writer: W) -> Self {
        Self { writer, open: true }
    }

    pub fn into_inner(self) -> W {
        self.writer
    }
}

impl<W: Write> Transport for StreamEndpoint<W> {
    fn kind(&self) -> EndpointKind {
        EndpointKind::Stream
    }

    fn send(&mut self, packet: &Packet) -> Result<(), TransportError> {
        if !self.open {
            return Err(TransportError::Closed);
        }
        self.writer.write_all(&frame_stream_packet(packet)?)?;
        self.writer.flush()?;
        Ok(())
    }

    fn close(&mut self) {
        self.open = false;
    }

    fn is_open(&self) -> bool {
        self.open
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeliveryReport {
    pub endpoint: EndpointKind,
    pub packets: usize,
    pub commands: usize,
    pub first_tick: Option<u64>,
    pub last_tick: Option<u64>,
}

impl DeliveryReport {
    /// Packets per second over the send span, counting one tick per packet.
    pub fn packet_rate_hz(&self) -> Option<f64> {
        let (first, last) = (self.first_tick?, self.last_tick?);
        let span_ms = (last - first + 1) * TICK_MS;
        Some(self.packets as f64 * 1000.0 / span_ms as f64)
    }
}

pub fn dispatch(packets: &[Packet], endpoint: &mut dyn Transport) -> Result<DeliveryReport, TransportError> {
    if !endpoint.is_open() {
        return Err(TransportError::Closed);
    }
    let mut commands = 0;
    for p in packets {
        endpoint.send(p)?;
        commands += p.commands.len();
    }
    Ok(DeliveryReport {
        endpoint: endpoint.kind(),
        packets: packets.len(),
        commands,
        first_tick: packets.first().map(|p| p.tick),
        last_tick: packets.last().map(|p| p.tick),
    })
}

/// Re-dispatches a record file with its original tick timing.
pub fn replay(record: &[u8], endpoint: &mut dyn Transport) -> Result<DeliveryReport, TransportError> {
    dispatch(&parse_record(record)?, endpoint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{VibrationCommand, WaveSelect};
    use crate::sim::{LatencyModel, Topology};
    use crate::transport::ChainCommand;

    fn packets(n: u64) -> Vec<Packet> {
        (0..n)
            .map(|tick| Packet {
                tick,
                commands: vec![ChainCommand {
                    chain: 0,
                    command: VibrationCommand::start((tick % 4) as u8, 5, 1, WaveSelect::Sine),
                }],
            })
            .collect()
    }

    fn loopback() -> SimLoopback {
        SimLoopback::new(ChainSim::new(Topology::uniform(1, 4), LatencyModel::default()).unwrap())
    }

    #[test]
    fn loopback_timing() {
        let mut ep = loopback();
        let report = dispatch(&packets(10), &mut ep).unwrap();
        assert_eq!(report.packets, 10);
        assert_eq!(report.packet_rate_hz(), Some(200.0));
        assert_eq!(ep.inject_times_us(), (0..10).map(|t| t * 5_000).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn closed_endpoints_refuse() {
        let mut ep = loopback();
        ep.close();
        assert!(matches!(dispatch(&packets(1), &mut ep), Err(TransportError::Closed)));
        let mut rec = RecordFile::new(Vec::new());
        rec.close();
        assert!(matches!(rec.send(&packets(1)[0]), Err(TransportError::Closed)));
        let mut st = StreamEndpoint::new(Vec::new());
        st.close();
        assert!(matches!(dispatch(&[], &mut st), Err(TransportError::Closed)));
    }

    #[test]
    fn empty_replay() {
        let report = replay(&[], &mut loopback()).unwrap();
        assert_eq!(report.packets, 0);
        assert_eq!(report.packet_rate_hz(), None);
    }

    #[test]
    fn record_then_replay_matches_direct() {
        let ps = packets(20);
        let mut direct = loopback();
        dispatch(&ps, &mut direct).unwrap();
        let mut rec = RecordFile::new(Vec::new());
        dispatch(&ps, &mut rec).unwrap();
        let mut replayed = loopback();
        replay(&rec.into_inner(), &mut replayed).unwrap();
        let (mut a, mut b) = (direct.into_sim(), replayed.into_sim());
        assert_eq!(a.run_to_idle(), b.run_to_idle());
        assert_eq!(a.trace(0, 3).unwrap(), b.trace(0, 3).unwrap());
    }
}

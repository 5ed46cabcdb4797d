use std::collections::VecDeque;

use serde::Serialize;

use super::{ChainCommand, Packet, TICK_MS};
use crate::pattern::{TimedCommand, UnitKey};
use crate::sim::MAX_COMMANDS_PER_PACKET;

/// A command that left later than its own tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Spill {
    pub command: TimedCommand,
    pub scheduled_tick: u64,
    pub delivered_tick: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Schedule {
    pub packets: Vec<Packet>,
    pub spills: Vec<Spill>,
    /// Largest number of commands left waiting at the end of any tick.
    pub peak_backlog: usize,
}

impl Schedule {
    pub fn command_count(&self) -> usize {
        self.packets.iter().map(|p| p.commands.len()).sum()
    }
}

/// Bins commands into 5 ms ticks of at most five.
///
/// When a tick overflows, STOP commands are kept first (each bringing along
/// any earlier pending commands for the same unit), then the oldest
/// remaining commands fill the tick. A STOP whose carried commands do not
/// fit takes the rest of the tick for the oldest of them. Everything else waits for the next
/// tick; nothing is dropped and per-unit order is never changed.
pub fn schedule(stream: &[TimedCommand]) -> Schedule {
    let mut input: Vec<TimedCommand> = stream.to_vec();
    input.sort_by_key(|c| c.t_ms);
    let mut input = input.into_iter().peekable();

    let mut out = Schedule::default();
    let mut pending: VecDeque<(TimedCommand, u64)> = VecDeque::new();
    let mut tick = match input.peek() {
        Some(c) => c.t_ms / TICK_MS,
        None => return out,
    };
    loop {
        while let Some(c) = input.next_if(|c| c.t_ms / TICK_MS <= tick) {
            pending.push_back((c, c.t_ms / TICK_MS));
        }
        if pending.is_empty() {
            match input.peek() {
                Some(c) => {
                    tick = c.t_ms / TICK_MS;
                    continue;
                }
                None => break,
            }
        }

        let picked = select(&pending);
        let mut commands = Vec::with_capacity(picked.len());
        let mut kept = VecDeque::with_capacity(pending.len() - picked.len());
        for (i, (c, scheduled)) in pending.drain(..).enumerate() {
            if picked.contains(&i) {
                if scheduled != tick {
                    out.spills.push(Spill {
                        command: c,
                        scheduled_tick: scheduled,
                        delivered_tick: tick,
                    });
                }
                commands.push(ChainCommand {
                    chain: c.chain,
                    command: c.command,
                });
            } else {
                kept.push_back((c, scheduled));
            }
        }
        pending = kept;
        out.peak_backlog = out.peak_backlog.max(pending.len());
        out.packets.push(Packet { tick, commands });
        tick += 1;
    }
    out
}

/// Indices (ascending) of the pending commands that go out this tick.
fn select(pending: &VecDeque<(TimedCommand, u64)>) -> Vec<usize> {
    let mut chosen = vec![false; pending.len()];
    let mut budget = MAX_COMMANDS_PER_PACKET;
    let unit = |i: usize| -> UnitKey { pending[i].0.unit() };

    for i in (0..pending.len()).filter(|&i| pending[i].0.command.is_stop()) {
        let needed: Vec<usize> = (0..=i)
            .filter(|&j| !chosen[j] && unit(j) == unit(i))
            .collect();
        let fits = needed.len() <= budget;
        for &j in needed.iter().take(budget) {
            chosen[j] = true;
        }
        budget = budget.saturating_sub(needed.len());
        if !fits {
            // the rest of the packet goes to the commands blocking this STOP
            break;
        }
    }
    for i in 0..pending.len() {
        if budget == 0 {
            break;
        }
        let blocked = (0..i).any(|j| !chosen[j] && unit(j) == unit(i));
        if !chosen[i] && !blocked {
            chosen[i] = true;
            budget -= 1;
        }
    }
    (0..pending.len()).filter(|&i| chosen[i]).collect()
}

//! CSV writers for trajectories, execution events and link logs.

use std::io::Write;

use super::episode::{DlLogRow, TraceEvent, UlLogRow};
use crate::map::Cell;

pub fn write_trajectory<W: Write>(out: W, traj: &[Vec<Cell>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "agent", "x", "y"])?;
    for (t, row) in traj.iter().enumerate() {
        for (i, c) in row.iter().enumerate() {
            w.write_record([t.to_string(), i.to_string(), c.x.to_string(), c.y.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_events<W: Write>(out: W, events: &[TraceEvent]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "agent", "x", "y", "event", "wait_cause"])?;
    for e in events {
        let kind = format!("{:?}", e.kind).to_lowercase();
        w.write_record([
            e.t.to_string(),
            e.agent.to_string(),
            e.cell.x.to_string(),
            e.cell.y.to_string(),
            kind,
            e.cause.name().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ul_log<W: Write>(out: W, rows: &[UlLogRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "agent", "bits", "rbs", "rate", "p_loss", "success"])?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.agent.to_string(),
            r.bits.to_string(),
            r.rbs.to_string(),
            r.rate.to_string(),
            r.p_loss.to_string(),
            r.success.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dl_log<W: Write>(out: W, rows: &[DlLogRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "agent", "score", "bits", "rbs", "rate", "success"])?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.agent.to_string(),
            r.score.to_string(),
            r.bits.to_string(),
            r.rbs.to_string(),
            r.rate.to_string(),
            r.success.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

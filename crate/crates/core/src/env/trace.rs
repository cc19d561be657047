use std::io::Write;

use super::TraceRow;
use crate::error::Result;

/// Writes `step,time,task_id,ttype,demand,action,reward,crashed,server_load_0..`
/// with one row per decision.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let n_servers = rows.first().map_or(0, |r| r.server_loads.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["step", "time", "task_id", "ttype", "demand", "action", "reward", "crashed"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..n_servers).map(|i| format!("server_load_{i}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.step.to_string(),
            r.time.to_string(),
            r.task_id.to_string(),
            r.ttype.to_string(),
            r.demand.to_string(),
            r.action.to_string(),
            r.reward.to_string(),
            u8::from(r.crashed).to_string(),
        ];
        rec.extend(r.server_loads.iter().map(u32::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| crate::Error::io("<trace>", e))?;
    Ok(())
}

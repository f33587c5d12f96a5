use super::masking::AggregationOutcome;

/// Byte and time totals of one aggregation run.
#[derive(Debug, Clone, PartialEq)]
pub struct CommunicationReport {
    pub k: usize,
    pub m: usize,
    pub n: usize,
    pub q: u64,
    pub dropout: f64,
    /// Bytes sent by the busiest client (a full participant).
    pub client_bytes: usize,
    pub client_bytes_mean: f64,
    /// Bytes the server sent plus bytes it received.
    pub server_bytes: usize,
    /// `client_bytes / (4·m)`: traffic relative to sending the raw vector.
    pub expansion: f64,
    /// Mean per-client protocol time.
    pub client_ms: f64,
    /// Server protocol time, excluding public-matrix expansion.
    pub server_ms: f64,
    pub server_reconstruct_ms: f64,
    pub setup_ms: f64,
    pub outcome: String,
}

pub fn measure_transcript(outcome: &AggregationOutcome) -> CommunicationReport {
    let tr = &outcome.transcript;
    let sent = tr.client_sent();
    let client_bytes = sent.iter().copied().max().unwrap_or(0);
    let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
    let client_totals: Vec<f64> = tr
        .timings
        .clients
        .iter()
        .map(|t| ms(t.protocol_total()))
        .collect();
    CommunicationReport {
        k: outcome.k,
        m: outcome.m,
        n: outcome.n,
        q: outcome.q,
        dropout: outcome.dropout_fraction,
        client_bytes,
        client_bytes_mean: sent.iter().sum::<usize>() as f64 / sent.len().max(1) as f64,
        server_bytes: tr.server_sent() + tr.server_received(),
        expansion: client_bytes as f64 / (4.0 * outcome.m as f64),
        client_ms: client_totals.iter().sum::<f64>() / client_totals.len().max(1) as f64,
        server_ms: ms(tr.timings.server.protocol_total()),
        server_reconstruct_ms: ms(tr.timings.server.reconstruct),
        setup_ms: ms(tr.timings.server.setup),
        outcome: match &outcome.result {
            Ok(_) => "ok".to_string(),
            Err(reason) => format!("abort: {reason}"),
        },
    }
}

impl CommunicationReport {
    pub const CSV_HEADER: [&'static str; 11] = [
        "k",
        "m",
        "n",
        "q",
        "dropout",
        "client_bytes",
        "server_bytes",
        "expansion",
        "client_ms",
        "server_ms",
        "outcome",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.k.to_string(),
            self.m.to_string(),
            self.n.to_string(),
            self.q.to_string(),
            self.dropout.to_string(),
            self.client_bytes.to_string(),
            self.server_bytes.to_string(),
            format!("{:.6}", self.expansion),
            format!("{:.3}", self.client_ms),
            format!("{:.3}", self.server_ms),
            self.outcome.clone(),
        ]
    }
}

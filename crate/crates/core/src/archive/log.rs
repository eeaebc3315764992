use std::collections::BTreeMap;

use chrono::{DateTime, Utc};

use crate::datasets::ClassId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryLogEntry {
    pub timestamp: DateTime<Utc>,
    pub class: ClassId,
    pub result_count: usize,
}

/// Append-only record of answered queries.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QueryLog {
    pub entries: Vec<QueryLogEntry>,
}

impl QueryLog {
    pub fn record(&mut self, timestamp: DateTime<Utc>, class: ClassId, result_count: usize) {
        self.entries.push(QueryLogEntry {
            timestamp,
            class,
            result_count,
        });
    }

    /// Query counts per (`YYYY-MM`, class).
    pub fn monthly_rollup(&self) -> BTreeMap<(String, ClassId), usize> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry((e.timestamp.format("%Y-%m").to_string(), e.class))
                .or_insert(0) += 1;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageRow {
    pub month: String,
    pub class: ClassId,
    pub count: usize,
}

/// Monthly (UTC) query counts per class, ordered by month then class.
pub fn usage_report(log: &QueryLog) -> Vec<UsageRow> {
    log.monthly_rollup()
        .into_iter()
        .map(|((month, class), count)| UsageRow { month, class, count })
        .collect()
}

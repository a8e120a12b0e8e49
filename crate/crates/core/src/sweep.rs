//! Exhaustive grid search over the tunable scalars. There is no gradient
//! training at this scale; the sweep enumerates configurations, evaluates
//! each on the same seeded probe set, and marks the best row by F1.

use std::collections::HashMap;

use crate::config::RunConfig;
use crate::corpus::{populate, Dialogue, UserStrategy};
use crate::error::{Error, Result};
use crate::eval::{eval_queries_from_store, run_eval, EvalOptions, EvalReport};
use crate::store::MemoryStore;

/// Keys that change how the store is built; grid combinations differing
/// only in eval-side keys reuse the same store.
const INGEST_KEYS: [&str; 4] = ["dim", "alpha_momentum", "lambda_decay", "tau_surprise"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamGrid {
    axes: Vec<(String, Vec<String>)>,
}

impl ParamGrid {
    /// Parse `key=v1,v2;key2=v3,v4`. Axis order is preserved; the last
    /// axis varies fastest in enumeration order.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut axes = Vec::new();
        for part in spec.split(';').filter(|p| !p.trim().is_empty()) {
            let (key, values) = part.split_once('=').ok_or_else(|| Error::Invalid {
                what: "grid",
                why: format!("expected key=v1,v2, got {part:?}"),
            })?;
            let key = key.trim().to_owned();
            let values: Vec<String> = values
                .split(',')
                .map(|v| v.trim().to_owned())
                .filter(|v| !v.is_empty())
                .collect();
            if values.is_empty() {
                return Err(Error::Invalid {
                    what: "grid",
                    why: format!("axis {key} has no values"),
                });
            }
            if axes.iter().any(|(k, _)| *k == key) {
                return Err(Error::Invalid {
                    what: "grid",
                    why: format!("axis {key} listed twice"),
                });
            }
            axes.push((key, values));
        }
        if axes.is_empty() {
            return Err(Error::Invalid {
                what: "grid",
                why: "no axes".into(),
            });
        }
        Ok(Self { axes })
    }

    pub fn axes(&self) -> &[(String, Vec<String>)] {
        &self.axes
    }

    pub fn combo_count(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    fn combos(&self) -> Vec<Vec<(String, String)>> {
        let mut out: Vec<Vec<(String, String)>> = vec![Vec::new()];
        for (key, values) in &self.axes {
            let mut next = Vec::with_capacity(out.len() * values.len());
            for prefix in &out {
                for value in values {
                    let mut combo = prefix.clone();
                    combo.push((key.clone(), value.clone()));
                    next.push(combo);
                }
            }
            out = next;
        }
        out
    }

    fn touches_ingest(&self) -> bool {
        self.axes.iter().any(|(k, _)| INGEST_KEYS.contains(&k.as_str()))
    }
}

/// Where the records come from. Sweeping ingest-side keys needs the
/// corpus so stores can be rebuilt per combination.
pub enum SweepSource<'a> {
    Corpus(&'a [Dialogue]),
    Store(&'a MemoryStore),
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub index: usize,
    pub combo: Vec<(String, String)>,
    pub report: EvalReport,
    pub best: bool,
}

/// One evaluation per grid combination, in enumeration order. The best
/// row by F1 (first on ties) is flagged.
pub fn run_sweep(
    source: SweepSource<'_>,
    base: &RunConfig,
    grid: &ParamGrid,
    cap: usize,
    opts: &EvalOptions,
) -> Result<Vec<SweepRow>> {
    let combos = grid.combo_count();
    if combos > cap {
        return Err(Error::GridCapExceeded { combos, cap });
    }
    if grid.touches_ingest() {
        if let SweepSource::Store(_) = source {
            return Err(Error::Invalid {
                what: "sweep",
                why: "grid sweeps an ingest-side key; a corpus input is required".into(),
            });
        }
    }

    let mut store_cache: HashMap<String, MemoryStore> = HashMap::new();
    let mut rows = Vec::with_capacity(combos);
    for (index, combo) in grid.combos().into_iter().enumerate() {
        let mut config = base.clone();
        for (key, value) in &combo {
            config.set(key, value)?;
        }
        config.validate()?;
        let embedder = config.embedder()?;

        let ingest_key = format!(
            "dim={} alpha={} lambda={} tau={}",
            config.dim, config.alpha_momentum, config.lambda_decay, config.tau_surprise
        );
        let store: &MemoryStore = match &source {
            SweepSource::Store(store) => store,
            SweepSource::Corpus(dialogues) => {
                if !store_cache.contains_key(&ingest_key) {
                    let mut built = MemoryStore::new(config.dim)?;
                    populate(
                        &mut built,
                        dialogues,
                        &embedder,
                        &config.dynamics()?,
                        &UserStrategy::default(),
                    )?;
                    store_cache.insert(ingest_key.clone(), built);
                }
                &store_cache[&ingest_key]
            }
        };

        let eval_opts = EvalOptions {
            k: config.top_k,
            strategy: config.strategy,
            mode: config.barrier_mode,
            seed: config.seed,
            ..opts.clone()
        };
        let queries = eval_queries_from_store(store, &eval_opts, &embedder)?;
        let (report, _) = run_eval(store, &queries, &eval_opts, &config.retrieval()?, &config.digest())?;
        rows.push(SweepRow {
            index,
            combo,
            report,
            best: false,
        });
    }

    if let Some(best_idx) = rows
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.report
                .f1
                .partial_cmp(&b.report.f1)
                .expect("finite f1")
                .then(ib.cmp(ia)) // first wins ties
        })
        .map(|(i, _)| i)
    {
        rows[best_idx].best = true;
    }
    Ok(rows)
}

/// CSV rendering: one row per combination, grid keys as leading columns.
pub fn sweep_csv(rows: &[SweepRow], grid: &ParamGrid) -> String {
    let mut header = String::from("combo");
    for (key, _) in grid.axes() {
        header.push(',');
        header.push_str(key);
    }
    header.push_str(",precision,recall,f1,memory_utilization,accuracy,bleu,best\n");
    let mut out = header;
    for row in rows {
        out.push_str(&row.index.to_string());
        for (_, value) in &row.combo {
            out.push(',');
            out.push_str(value);
        }
        let r = &row.report;
        out.push_str(&format!(
            ",{},{},{},{},{},{},{}\n",
            r.precision,
            r.recall,
            r.f1,
            r.memory_utilization,
            r.accuracy,
            r.bleu,
            if row.best { "yes" } else { "no" }
        ));
    }
    out
}

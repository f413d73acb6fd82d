use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use hyperretro::gateway::{ComplexityModel, ModelManifest};
use hyperretro::search::{SearchResult, SurrogateComplexity};
use hyperretro::smiles::{Normalizer, Profile};
use hyperretro::stock::FragmentLookup;
use hyperretro::{beam_search, ExpansionConfig, SearchConfig, StockSet, ToyNormalizer};
use serde_json::json;

use crate::routes::{route, Metadata, RouteDocument};
use crate::{config_error, write_output, FragmentMode, NormalizerChoice, OutputFormat, PlanArgs, EXIT_NO_ROUTE, EXIT_OK};

pub fn search_config(a: &PlanArgs) -> SearchConfig {
    SearchConfig {
        n_beams: a.beams,
        max_steps: a.max_steps,
        expansion: ExpansionConfig {
            retro_beams: a.retro_beams,
            auto_accept: a.theta_hi,
            selectivity_gap: a.gap,
            forward_topk: a.topk,
            threads: a.threads,
        },
    }
}

pub(crate) fn pick_normalizer(choice: NormalizerChoice, toy: Option<&ToyNormalizer>) -> Arc<dyn Normalizer> {
    Arc::new(match choice {
        NormalizerChoice::Auto => toy.copied().unwrap_or_default(),
        NormalizerChoice::Strict => ToyNormalizer::new(),
        NormalizerChoice::Placeholder => ToyNormalizer::placeholder(),
        NormalizerChoice::Inchified => ToyNormalizer::new().with_profile(Profile::Inchified),
    })
}

pub(crate) fn load_manifest(path: Option<&Path>) -> Result<ModelManifest> {
    let path = path.ok_or_else(|| config_error("--models is required"))?;
    ModelManifest::load(path).map_err(|e| config_error(format!("model manifest {}: {e}", path.display())))
}

pub fn run(a: &PlanArgs) -> Result<u8> {
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let cfg = search_config(a);
    cfg.validate().map_err(config_error)?;
    if a.complexity_tmax <= 0.0 {
        return Err(config_error("--complexity-tmax must be positive"));
    }
    let manifest = load_manifest(a.models.as_deref())?;
    manifest.check_beams(a.retro_beams, a.topk).map_err(|e| config_error(e.to_string()))?;
    if a.stock.is_empty() {
        return Err(config_error("at least one --stock file is required"));
    }
    let connected = manifest.connect().map_err(|e| config_error(e.to_string()))?;
    let normalizer = pick_normalizer(a.normalizer, connected.toy.as_deref().map(|t| t.normalizer()));

    let target = normalizer
        .normalize(&a.target)
        .map_err(|e| config_error(format!("target {:?}: {e}", a.target)))?;
    let (stock, report) = StockSet::load_many(&a.stock, normalizer.as_ref()).map_err(|e| config_error(e.to_string()))?;
    for (source, line, text) in &report.rejected {
        log::warn!("{source}:{line}: skipped {text:?}");
    }
    let stock = stock.with_lookup(match a.fragment_lookup {
        FragmentMode::Whole => FragmentLookup::WholeUnit,
        FragmentMode::PerFragment => FragmentLookup::PerFragment,
    });
    log::info!("stock: {} molecules ({} duplicates, {} rejected)", stock.len(), report.duplicates, report.rejected.len());

    let surrogate = SurrogateComplexity { t_max: a.complexity_tmax };
    let scorer: Arc<dyn ComplexityModel> = connected.complexity.clone().unwrap_or_else(|| Arc::new(surrogate));

    let result = beam_search(&target, &cfg, &connected.suite, normalizer, &stock, scorer.as_ref());

    let doc = RouteDocument {
        target: target.as_str().to_owned(),
        routes: result
            .pathways
            .iter()
            .take(a.max_routes)
            .enumerate()
            .map(|(i, p)| route(&result.graph, i + 1, p))
            .collect(),
        stats: result.stats.clone(),
        config: json!({
            "beams": a.beams,
            "max_steps": a.max_steps,
            "retro_beams": a.retro_beams,
            "theta_hi": a.theta_hi,
            "gap": a.gap,
            "topk": a.topk,
            "complexity_tmax": a.complexity_tmax,
            "fragment_lookup": format!("{:?}", a.fragment_lookup).to_lowercase(),
            "seed": a.seed,
            "stock_size": stock.len(),
        }),
        metadata: Metadata {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            started_unix,
            elapsed_ms: u64::try_from(started.elapsed().as_millis()).unwrap_or(u64::MAX),
        },
    };

    if let Some(path) = &a.graph {
        std::fs::write(path, result.graph.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &a.trace {
        let mut lines = String::new();
        for r in &result.trace {
            lines.push_str(&serde_json::to_string(r)?);
            lines.push('\n');
        }
        std::fs::write(path, lines).with_context(|| format!("writing {}", path.display()))?;
    }

    let body = match a.format {
        OutputFormat::Json => serde_json::to_string_pretty(&doc)? + "\n",
        OutputFormat::Dot => {
            let best = result.pathways.first().and_then(|p| result.graph.extract_route(&p.arcs).ok());
            result.graph.to_dot(best.as_ref())
        }
    };
    write_output(a.out.as_deref(), &body)?;

    let summary = summary(&result, a.max_routes);
    if a.out.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    Ok(if result.solved().next().is_some() { EXIT_OK } else { EXIT_NO_ROUTE })
}

fn summary(r: &SearchResult, max: usize) -> String {
    let mut s = format!(
        "{} molecules, {} arcs, {} phases, {} pathways ({} solved)\n",
        r.graph.node_count(),
        r.graph.arc_count(),
        r.stats.phases,
        r.pathways.len(),
        r.solved().count()
    );
    let _ = writeln!(s, "{:>4}  {:<10} {:>5} {:>12}", "rank", "status", "steps", "score");
    for (i, p) in r.pathways.iter().take(max.min(10)).enumerate() {
        let status = serde_json::to_value(p.status).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        let _ = writeln!(s, "{:>4}  {:<10} {:>5} {:>12.6e}", i + 1, status, p.steps, p.score);
    }
    s
}

use anyhow::Result;
use hyperretro::HyperGraph;

use crate::routes::RouteDocument;
use crate::{config_error, write_output, ExportArgs, OutputFormat, EXIT_OK};

pub fn run(a: &ExportArgs) -> Result<u8> {
    let path = a.graph.as_deref().ok_or_else(|| config_error("--graph is required"))?;
    let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("reading {}: {e}", path.display())))?;
    let g = HyperGraph::from_json(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;

    let highlight = match &a.routes {
        Some(rp) => {
            let text = std::fs::read_to_string(rp).map_err(|e| config_error(format!("reading {}: {e}", rp.display())))?;
            let doc: RouteDocument =
                serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", rp.display())))?;
            let route = doc
                .routes
                .iter()
                .find(|r| r.rank == a.rank)
                .ok_or_else(|| config_error(format!("{} has no route of rank {}", rp.display(), a.rank)))?;
            let arcs: Vec<_> = route.steps.iter().map(|s| s.arc).collect();
            let tree = g
                .extract_route(&arcs)
                .map_err(|e| config_error(format!("route {} does not fit the graph: {e}", a.rank)))?;
            Some(tree)
        }
        None => None,
    };

    let body = match a.format {
        OutputFormat::Dot => g.to_dot(highlight.as_ref()),
        OutputFormat::Json => g.to_json() + "\n",
    };
    write_output(a.out.as_deref(), &body)?;
    Ok(EXIT_OK)
}

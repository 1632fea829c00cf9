//! Static subcommands: parse, cfg, analyze, slice.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use ppl_core::analysis::{to_bayes_net, to_markov_net, Model};
use ppl_core::lang::pretty_print;
use ppl_core::slicer::{slice_for_factor, slice_listing, slice_to_dot};

use crate::model::Loaded;
use crate::{CliError, CliResult};

pub fn parse(m: &Loaded, out: &mut dyn Write) -> CliResult<()> {
    out.write_all(pretty_print(&m.program).as_bytes())?;
    Ok(())
}

pub fn cfg(m: &Loaded, dot: bool, out: &mut dyn Write) -> CliResult<()> {
    let model = m.model();
    let g = &model.cfg;
    if dot {
        out.write_all(g.to_dot().as_bytes())?;
        return Ok(());
    }
    for n in &g.nodes {
        let succ: Vec<String> = g.edges().iter().filter(|e| e.0 == n.id).map(|e| e.1.to_string()).collect();
        writeln!(out, "{:>4}  {:<40} -> {}", n.id, n.label(), succ.join(", "))?;
    }
    Ok(())
}

fn braces<I: IntoIterator<Item = String>>(items: I) -> String {
    format!("{{{}}}", items.into_iter().collect::<Vec<_>>().join(", "))
}

fn text_report(model: &Model) -> String {
    let report = model.report();
    let mut s = String::new();
    let _ = writeln!(s, "{} factors", report.factors.len());
    for f in &report.factors {
        let _ = writeln!(s, "{:>3}  line {:<3} {:<14} {}", f.index, f.line, f.address, braces(f.address_set.iter().cloned()));
    }
    match to_bayes_net(model) {
        Ok(bn) => {
            let _ = writeln!(s, "bayesian network:");
            for (child, parents) in &bn.parents {
                let _ = writeln!(s, "  {child} <- {}", braces(parents.iter().cloned()));
            }
        }
        Err(e) => {
            let _ = writeln!(s, "bayesian network: none ({e})");
        }
    }
    let mn = to_markov_net(model);
    let _ = writeln!(s, "markov network: {} variables, {} cliques", mn.nodes.len(), mn.cliques.len());
    for c in &mn.cliques {
        let _ = writeln!(s, "  {}", braces(c.iter().cloned()));
    }
    s
}

pub fn analyze(m: &Loaded, json: bool, bn_path: Option<&Path>, mn_path: Option<&Path>, out: &mut dyn Write) -> CliResult<()> {
    let model = m.model();
    if json {
        let bn = to_bayes_net(&model);
        let doc = serde_json::json!({
            "model": m.name,
            "factors": model.report().factors,
            "bayes_net": bn.as_ref().ok(),
            "bayes_net_error": bn.as_ref().err().map(|e| e.to_string()),
            "markov_net": to_markov_net(&model),
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("serialisable"))?;
    } else {
        out.write_all(text_report(&model).as_bytes())?;
    }
    if let Some(p) = bn_path {
        let bn = to_bayes_net(&model).map_err(|e| CliError::Model(format!("{}: {e}", m.name)))?;
        std::fs::write(p, bn.to_dot())?;
    }
    if let Some(p) = mn_path {
        std::fs::write(p, to_markov_net(&model).to_dot())?;
    }
    Ok(())
}

pub fn slice(m: &Loaded, at: &str, dot: bool, out: &mut dyn Write) -> CliResult<()> {
    let model = m.model();
    let node = model
        .cfg
        .find_sample(at)
        .ok_or_else(|| CliError::Usage(format!("{}: no sample statement matches address {at:?}", m.name)))?;
    let s = slice_for_factor(&model, node);
    let text = if dot { slice_to_dot(&model, &s) } else { slice_listing(&model, &s) };
    out.write_all(text.as_bytes())?;
    Ok(())
}

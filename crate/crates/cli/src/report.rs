//! Tables and a chart assembled from the analysis JSON. Numbers are copied
//! in their JSON spelling so the tables never disagree with the source.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde_json::Value;

use crate::config::ExperimentConfig;

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => csv_field(s),
        other => other.to_string(),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn arr<'a>(v: &'a Value, key: &str) -> &'a [Value] {
    v[key].as_array().map_or(&[], Vec::as_slice)
}

fn save(cfg: &ExperimentConfig, rel: &str, text: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    let p = cfg.out(rel);
    fs::create_dir_all(p.parent().expect("report paths have a parent"))?;
    fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
    out.push(p);
    Ok(())
}

/// Analyses named in the config, in config order; tasks not yet analysed are
/// left out.
fn load_analyses(cfg: &ExperimentConfig) -> Result<Vec<Value>> {
    let mut all = Vec::new();
    for t in &cfg.tasks {
        let p = cfg.out(&format!("analysis/{}.json", t.name));
        if !p.is_file() {
            continue;
        }
        let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        all.push(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?);
    }
    Ok(all)
}

pub fn report(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let analyses = load_analyses(cfg)?;
    let layer_names: Vec<String> = cfg.layers.iter().map(ToString::to_string).collect();
    let mut out = Vec::new();

    let mut acc = format!(
        "task,kind,side,aggregation,majority,oov_rate,{}\n",
        layer_names.join(",")
    );
    for a in &analyses {
        let _ = write!(
            acc,
            "{},{},{},{},{},{}",
            cell(&a["task"]),
            cell(&a["kind"]),
            cell(&a["side"]),
            cell(&a["aggregation"]),
            cell(&a["majorityBaseline"]),
            cell(&a["oovRate"])
        );
        for name in &layer_names {
            let v = arr(a, "layers")
                .iter()
                .find(|l| l["layer"] == name.as_str());
            acc.push(',');
            acc.push_str(&v.map(|l| cell(&l["accuracy"])).unwrap_or_default());
        }
        acc.push('\n');
    }
    save(cfg, "report/accuracy.csv", &acc, &mut out)?;

    for a in &analyses {
        let task = a["task"].as_str().unwrap_or("task");

        let mut bins = format!(
            "layer,{},support,correct,accuracy\n",
            cell(&a["bins"]["statistic"])
        );
        for name in &layer_names {
            for b in a["bins"]["byLayer"][name.as_str()]
                .as_array()
                .into_iter()
                .flatten()
            {
                let _ = writeln!(
                    bins,
                    "{name},{},{},{},{}",
                    cell(&b["label"]),
                    cell(&b["support"]),
                    cell(&b["correct"]),
                    cell(&b["accuracy"])
                );
            }
        }
        save(cfg, &format!("report/{task}.bins.csv"), &bins, &mut out)?;

        let mut deltas =
            String::from("label,layer,baseline_accuracy,accuracy,delta,support,flagged\n");
        for d in arr(a, "deltas") {
            let fields = [
                "label",
                "layer",
                "baseline_accuracy",
                "accuracy",
                "delta",
                "support",
                "flagged",
            ];
            let row: Vec<String> = fields.iter().map(|f| cell(&d[*f])).collect();
            deltas.push_str(&row.join(","));
            deltas.push('\n');
        }
        save(cfg, &format!("report/{task}.deltas.csv"), &deltas, &mut out)?;

        // Successive-layer p-values as a matrix; untested pairs stay empty.
        let mut sig = format!("layer,{}\n", layer_names.join(","));
        for row in &layer_names {
            sig.push_str(row);
            for col in &layer_names {
                let p = arr(a, "significance").iter().find(|s| {
                    (s["a"] == row.as_str() && s["b"] == col.as_str())
                        || (s["a"] == col.as_str() && s["b"] == row.as_str())
                });
                sig.push(',');
                sig.push_str(&p.map(|s| cell(&s["pValue"])).unwrap_or_default());
            }
            sig.push('\n');
        }
        save(
            cfg,
            &format!("report/{task}.significance.csv"),
            &sig,
            &mut out,
        )?;
    }

    let bleu_path = cfg.out("translation/bleu.json");
    if bleu_path.is_file() {
        let v: Value = serde_json::from_str(&fs::read_to_string(&bleu_path)?)
            .with_context(|| format!("parsing {}", bleu_path.display()))?;
        let text = format!(
            "units,sentences,bleu\n{},{},{}\n",
            cell(&v["units"]),
            cell(&v["sentences"]),
            cell(&v["bleu"])
        );
        save(cfg, "report/bleu.csv", &text, &mut out)?;
    }

    save(
        cfg,
        "report/accuracy.svg",
        &accuracy_svg(&analyses, &layer_names),
        &mut out,
    )?;
    Ok(out)
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

/// Accuracy per layer selector, one polyline per task.
fn accuracy_svg(analyses: &[Value], layers: &[String]) -> String {
    let (w, h, left, top, plot_w, plot_h) = (640.0, 360.0, 60.0, 20.0, 440.0, 280.0);
    let x = |i: usize| {
        left + if layers.len() > 1 {
            plot_w * i as f64 / (layers.len() - 1) as f64
        } else {
            plot_w / 2.0
        }
    };
    let y = |acc: f64| top + plot_h * (1.0 - acc);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(
        s,
        "<rect x=\"{left}\" y=\"{top}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"#444\"/>"
    );
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{v:.2}</text>",
            left - 6.0,
            y(v) + 4.0
        );
    }
    for (i, name) in layers.iter().enumerate() {
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{name}</text>",
            x(i),
            top + plot_h + 18.0
        );
    }
    for (n, a) in analyses.iter().enumerate() {
        let color = PALETTE[n % PALETTE.len()];
        let points: Vec<String> = layers
            .iter()
            .enumerate()
            .filter_map(|(i, name)| {
                let l = arr(a, "layers")
                    .iter()
                    .find(|l| l["layer"] == name.as_str())?;
                Some(format!("{:.1},{:.1}", x(i), y(l["accuracy"].as_f64()?)))
            })
            .collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
            points.join(" ")
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>",
            left + plot_w + 12.0,
            top + 14.0 + 16.0 * n as f64,
            a["task"].as_str().unwrap_or("")
        );
    }
    s.push_str("</svg>\n");
    s
}

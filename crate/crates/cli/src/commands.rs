use std::fs;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use wavedisp::branchpoints::{
    trace_branch_point_partial, BranchPointId, BranchPointRecord, KFactor, PathShape, PathSpec,
};
use wavedisp::dispersion::{
    group_velocity_fd, horizontal_diagram, BranchLabel, BranchTable, ClassifyOptions, ContinuationOptions,
};
use wavedisp::medium::principal_sqrt;
use wavedisp::modes::{group_velocity_bilinear, solve_coefficients};
use wavedisp::transient::{
    build_contour, cutoff_frequencies, real_axis_peaks, relative_rms, synthesize as synth, time_grid, track_branches,
    ContourSpec, FrequencyContour, GrowthCheck, SpacingPolicy, SynthesisOptions,
};
use wavedisp::{Complex64, LayerStack};

use crate::output::{num, Sink, Table};
use crate::{Common, ContourName, DiagramArgs, Factor, GvArgs, Shape, SynthArgs, TraceArgs, Usage};

fn load_stack(c: &Common) -> Result<LayerStack> {
    match &c.config {
        None => Ok(LayerStack::reference()),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Usage(format!("cannot read config {}: {e}", path.display())))?;
            Ok(LayerStack::from_toml_str(&text)?)
        }
    }
}

fn label_str(l: Option<BranchLabel>) -> &'static str {
    l.map_or("", |l| l.as_str())
}

pub fn diagram(a: &DiagramArgs) -> Result<()> {
    let stack = load_stack(&a.common)?;
    if !(a.wmax > 0.0) {
        return Err(Usage("--wmax must be positive".into()).into());
    }
    let opts = ContinuationOptions::default();
    let mut t = horizontal_diagram(a.im_omega, a.wmax.sqrt(), a.branches, a.step, a.im0, &stack, &opts)?;
    t.classify(a.im_omega, stack.speeds(), &ClassifyOptions::default());
    let mut out = Table::new(&[
        "branch", "label", "re_omega", "im_omega", "re_W", "im_W", "re_k", "im_k", "re_K", "im_K",
    ]);
    for b in 0..t.n_branches() {
        for (j, &o) in t.nodes.iter().enumerate() {
            let (w, k, kk) = (t.w(j), t.k[b][j], t.kk[b][j]);
            out.push(vec![
                b.to_string(),
                label_str(t.labels[b]).into(),
                num(o.re),
                num(o.im),
                num(w.re),
                num(w.im),
                num(k.re),
                num(k.im),
                num(kk.re),
                num(kk.im),
            ]);
        }
    }
    let mut sink = Sink::new(&a.common.out)?;
    sink.table("diagram.csv", &out)?;
    let labels: Vec<&str> = t.labels.iter().map(|&l| label_str(l)).collect();
    sink.finish("diagram", &stack, serde_json::json!({ "args": a, "labels": labels }))
}

fn gv_rows(t: &BranchTable, b: usize, stack: &LayerStack) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for j in 1..t.nodes.len() - 1 {
        let kk = t.kk[b][j];
        // evanescent nodes carry no group velocity
        if kk.re <= 0.0 {
            continue;
        }
        let fd = group_velocity_fd(t, b, j);
        let bil = solve_coefficients(t.nodes[j], t.k[b][j], stack).and_then(|p| group_velocity_bilinear(&p));
        let cell = |r: &wavedisp::Result<f64>| r.as_ref().map_or(String::new(), |v| num(*v));
        let (disc, status) = match (&fd, &bil) {
            (Ok(f), Ok(v)) => (num((f - v).abs() / v.abs()), "ok".to_string()),
            (Err(wavedisp::Error::Cutoff), _) | (_, Err(wavedisp::Error::Cutoff)) => (String::new(), "cutoff".into()),
            (Err(e), _) | (_, Err(e)) => (String::new(), format!("failed: {e}")),
        };
        rows.push(vec![
            num(t.w(j).re),
            num(t.nodes[j].re),
            b.to_string(),
            num(kk.re),
            num(t.k[b][j].re),
            cell(&fd),
            cell(&bil),
            disc,
            status,
        ]);
    }
    rows
}

pub fn gv(a: &GvArgs) -> Result<()> {
    let stack = load_stack(&a.common)?;
    if !(a.wmax > 0.0) {
        return Err(Usage("--wmax must be positive".into()).into());
    }
    let opts = ContinuationOptions::default();
    let t = horizontal_diagram(0.0, a.wmax.sqrt(), a.branches, a.step, a.im0, &stack, &opts)?;
    let per_branch: Vec<_> = (0..t.n_branches()).into_par_iter().map(|b| gv_rows(&t, b, &stack)).collect();
    let mut out = Table::new(&[
        "W", "omega", "branch", "K", "k", "v_gr_fd", "v_gr_bilinear", "rel_discrepancy", "status",
    ]);
    for r in per_branch.into_iter().flatten() {
        out.push(r);
    }
    let mut sink = Sink::new(&a.common.out)?;
    sink.table("gv.csv", &out)?;
    sink.finish("gv", &stack, serde_json::json!({ "args": a }))
}

#[derive(Serialize)]
struct TraceJson<'a> {
    id: BranchPointId,
    path: PathSpec,
    seed_case: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    record: Option<&'a BranchPointRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_omega: Option<Complex64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn trajectory_table(eps: &[(f64, f64)], traj: &[(Complex64, Complex64)], fin: Option<(Complex64, Complex64)>) -> Table {
    let mut t = Table::new(&[
        "eps1", "eps2", "re_theta", "im_theta", "re_xi", "im_xi", "re_omega_star", "im_omega_star",
    ]);
    let rows = eps.iter().map(|&(e1, e2)| (num(e1), num(e2))).zip(traj.iter().copied());
    let last = fin.map(|f| (("inf".to_string(), "inf".to_string()), f));
    for ((e1, e2), (th, xi)) in rows.chain(last) {
        // omega* = sqrt(Theta); the principal root follows the sign of Im Theta
        let o = principal_sqrt(th);
        t.push(vec![e1, e2, num(th.re), num(th.im), num(xi.re), num(xi.im), num(o.re), num(o.im)]);
    }
    t
}

pub fn trace(a: &TraceArgs) -> Result<()> {
    let stack = load_stack(&a.common)?;
    let ids: Vec<BranchPointId> =
        a.ids.iter().map(|v| BranchPointId::new(v[0], v[1], v[2], v[3])).collect::<wavedisp::Result<_>>()?;
    let signs: &[i8] = if a.both_signs { &[1, -1] } else { &[1] };
    let jobs: Vec<(BranchPointId, PathSpec)> = ids
        .iter()
        .flat_map(|&id| {
            signs.iter().map(move |&sign| {
                let mut p = PathSpec::default_for(id);
                p.eps0 = a.eps0;
                p.end = a.end;
                p.nodes = a.nodes;
                p.sign = sign;
                p.factor = match a.factor {
                    Factor::Squared => KFactor::Squared,
                    Factor::Printed => KFactor::Printed,
                };
                if let Some(s) = a.shape {
                    p.shape = match s {
                        Shape::Lower => PathShape::Lower,
                        Shape::Upper => PathShape::Upper,
                        Shape::Diagonal => PathShape::Diagonal,
                    };
                }
                (id, p)
            })
        })
        .collect();
    let results: Vec<_> =
        jobs.par_iter().map(|(id, p)| trace_branch_point_partial(*id, p, &stack)).collect();
    let mut sink = Sink::new(&a.common.out)?;
    let mut first_err = None;
    let mut summary = Vec::new();
    for ((id, p), res) in jobs.iter().zip(&results) {
        let stem = format!("trace_{}-{}-{}-{}_{}", id.mu, id.nu, id.m, id.n, if p.sign > 0 { "pos" } else { "neg" });
        let seed_case = if (id.mu, id.nu) == (1, 3) { "case 2" } else { "case 1" };
        let (json, table) = match res {
            Ok(r) => {
                let fo = r.final_omega();
                summary.push(serde_json::json!({ "id": id, "sign": p.sign, "final_omega": fo }));
                (
                    TraceJson { id: *id, path: *p, seed_case, record: Some(r), final_omega: Some(fo), error: None },
                    trajectory_table(&r.eps_path, &r.trajectory, Some(r.final_point)),
                )
            }
            Err(f) => {
                summary.push(serde_json::json!({ "id": id, "sign": p.sign, "error": f.error.to_string() }));
                first_err.get_or_insert_with(|| f.error.clone());
                (
                    TraceJson { id: *id, path: *p, seed_case, record: None, final_omega: None, error: Some(f.error.to_string()) },
                    trajectory_table(&f.eps_path, &f.trajectory, None),
                )
            }
        };
        let mut text = serde_json::to_string_pretty(&json)?;
        text.push('\n');
        sink.write(&format!("{stem}.json"), text.as_bytes())?;
        sink.table(&format!("{stem}.csv"), &table)?;
    }
    sink.finish("trace", &stack, serde_json::json!({ "args": a, "results": summary }))?;
    match first_err {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn contour_spec(a: &SynthArgs) -> Result<ContourSpec> {
    Ok(match a.contour {
        ContourName::A => ContourSpec::preset("a")?,
        ContourName::B => ContourSpec::preset("b")?,
        ContourName::C => ContourSpec::preset("c")?,
        ContourName::Custom => ContourSpec { rise: a.rise, band: (a.band_lo, a.band_hi), ..ContourSpec::preset("a")? },
    })
}

fn tracked(spec: &ContourSpec, a: &SynthArgs, stack: &LayerStack) -> Result<(FrequencyContour, BranchTable)> {
    let cut = cutoff_frequencies(stack, spec.omega_max);
    let q = build_contour(spec, &SpacingPolicy::default(), &cut)?;
    let t = track_branches(&q, a.branches, a.im0, stack, &ContinuationOptions::default())?;
    Ok((q, t))
}

fn resolve_subset(name: &str, table: &mut BranchTable, rise: f64, stack: &LayerStack) -> Result<Vec<usize>> {
    let want = match name {
        "all" => return Ok((0..table.n_branches()).collect()),
        "type1" => BranchLabel::Type1,
        "type2" => BranchLabel::Type2,
        "type3" => BranchLabel::Type3,
        "type23" => BranchLabel::Type23,
        list => {
            return list
                .split(',')
                .map(|p| p.trim().parse::<usize>().map_err(|_| Usage(format!("bad subset '{name}'")).into()))
                .collect()
        }
    };
    table.classify(rise, stack.speeds(), &ClassifyOptions::default());
    Ok((0..table.n_branches()).filter(|&b| table.labels[b] == Some(want)).collect())
}

pub fn synthesize(a: &SynthArgs) -> Result<()> {
    let stack = load_stack(&a.common)?;
    let y0 = match a.y0.as_str() {
        "top" => stack.depth(),
        v => v.parse::<f64>().map_err(|_| Usage(format!("--y0 expects a number or 'top', got '{v}'")))?,
    };
    if !(a.dt > 0.0 && a.tmax >= 0.0) {
        return Err(Usage("need --dt > 0 and --tmax >= 0".into()).into());
    }
    let spec = contour_spec(a)?;
    let reference = ContourSpec::preset("a")?;
    let (main, refr) = rayon::join(
        || tracked(&spec, a, &stack),
        || if a.compare || a.growth_factor.is_some() { Some(tracked(&reference, a, &stack)) } else { None },
    );
    let (q, mut table) = main?;
    let refr = refr.transpose()?;
    let subset = resolve_subset(&a.subset, &mut table, spec.rise, &stack)?;
    let t = time_grid(a.tmax, a.dt);
    let mut opts = SynthesisOptions::default();
    if let (Some(factor), Some((_, ta))) = (a.growth_factor, &refr) {
        if !(factor > 0.0) {
            return Err(Usage("--growth-factor must be positive".into()).into());
        }
        // unknown ids are reported by the synthesis itself
        let known: Vec<usize> = subset.iter().copied().filter(|&b| b < ta.n_branches()).collect();
        if known.len() == subset.len() {
            let peaks = real_axis_peaks(ta, &subset, a.distance, y0, &stack, &opts)?;
            opts.growth = Some((GrowthCheck { factor }, peaks));
        }
    }
    let sig = synth(&q, &table, &subset, a.distance, y0, &t, &stack, &opts).context("synthesis")?;
    let contour = match a.contour {
        ContourName::A => "a",
        ContourName::B => "b",
        ContourName::C => "c",
        ContourName::Custom => "custom",
    };
    let stem = format!("signal_{contour}_{}", a.subset.replace(',', "-"));
    let mut out = Table::new(&["t", "u", "re_u", "im_u"]);
    for (i, &tt) in t.iter().enumerate() {
        out.push(vec![num(tt), num(sig.u[i]), num(sig.u_complex[i].re), num(sig.u_complex[i].im)]);
    }
    let mut sink = Sink::new(&a.common.out)?;
    sink.table(&format!("{stem}.csv"), &out)?;
    let mut agreement = None;
    if let (true, Some((qa, ta))) = (a.compare, &refr) {
        let all: Vec<usize> = (0..ta.n_branches()).collect();
        let ua = synth(qa, ta, &all, a.distance, y0, &t, &stack, &opts).context("reference synthesis")?;
        let mut diff = Table::new(&["t", "u", "u_ref", "diff"]);
        for (i, &tt) in t.iter().enumerate() {
            diff.push(vec![num(tt), num(sig.u[i]), num(ua.u[i]), num(sig.u[i] - ua.u[i])]);
        }
        sink.table(&format!("{stem}_vs_a.csv"), &diff)?;
        let windows = if a.windows.is_empty() { vec![(t[0], *t.last().unwrap())] } else { a.windows.clone() };
        let rms: Vec<_> = windows
            .iter()
            .map(|&(t0, t1)| serde_json::json!({ "t0": t0, "t1": t1, "relative_rms": relative_rms(&t, &sig.u, &ua.u, t0, t1) }))
            .collect();
        agreement = Some(rms);
    }
    let labels: Vec<&str> = table.labels.iter().map(|&l| label_str(l)).collect();
    sink.finish(
        "synthesize",
        &stack,
        serde_json::json!({
            "args": a,
            "y0": y0,
            "subset_ids": subset,
            "labels": labels,
            "relative_rms_vs_a": agreement,
        }),
    )
}

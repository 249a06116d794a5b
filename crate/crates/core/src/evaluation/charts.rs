//! Static SVG charts of normalized median scores.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write;

use super::SolvabilityTable;
use crate::env::EnvId;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Radius in [0, 1] for a normalized score in [-1, 1]; 0.5 is the solvability ring.
fn radius(v: f64) -> f64 {
    (v.clamp(-1.0, 1.0) + 1.0) / 2.0
}

/// One polygon per agent over the environments, using each agent's best level.
pub(super) fn radar(table: &SolvabilityTable) -> String {
    let envs: Vec<EnvId> = {
        let mut v: Vec<EnvId> = table.cells.iter().map(|c| c.env).collect();
        v.sort();
        v.dedup();
        v
    };
    let mut best: BTreeMap<&str, BTreeMap<EnvId, f64>> = BTreeMap::new();
    for c in &table.cells {
        let e = best.entry(c.agent.as_str()).or_default().entry(c.env).or_insert(-1.0);
        *e = e.max(c.median_normalized);
    }
    let (cx, cy, r) = (260.0, 240.0, 180.0);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="640" height="480" viewBox="0 0 640 480">"#);
    let _ = writeln!(s, r#"<rect width="640" height="480" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<circle cx="{cx:.2}" cy="{cy:.2}" r="{:.2}" fill="#dddddd" stroke="none"/>"##,
        r * radius(0.0)
    );
    let _ = writeln!(s, r##"<circle cx="{cx:.2}" cy="{cy:.2}" r="{r:.2}" fill="none" stroke="#999999"/>"##);
    let n = envs.len().max(1) as f64;
    let point = |i: usize, rad: f64| {
        let angle = -PI / 2.0 + 2.0 * PI * i as f64 / n;
        (cx + r * rad * angle.cos(), cy + r * rad * angle.sin())
    };
    for (i, env) in envs.iter().enumerate() {
        let (x, y) = point(i, 1.0);
        let (lx, ly) = point(i, 1.12);
        let _ = writeln!(s, r##"<line x1="{cx:.2}" y1="{cy:.2}" x2="{x:.2}" y2="{y:.2}" stroke="#bbbbbb"/>"##);
        let _ = writeln!(
            s,
            r#"<text x="{lx:.2}" y="{ly:.2}" font-size="11" text-anchor="middle">{}</text>"#,
            escape(env.as_str())
        );
    }
    for (k, (agent, scores)) in best.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = envs
            .iter()
            .enumerate()
            .map(|(i, env)| {
                let (x, y) = point(i, radius(scores.get(env).copied().unwrap_or(-1.0)));
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        let ly = 30.0 + 18.0 * k as f64;
        let _ = writeln!(s, r#"<rect x="500" y="{:.2}" width="12" height="12" fill="{color}"/>"#, ly - 10.0);
        let _ = writeln!(s, r#"<text x="518" y="{ly:.2}" font-size="12">{}</text>"#, escape(agent));
    }
    s.push_str("</svg>\n");
    s
}

fn color(v: f64) -> String {
    let t = radius(v);
    let r = (255.0 * (1.0 - t)).round() as u8;
    let g = (200.0 * t + 55.0).round() as u8;
    format!("#{r:02x}{g:02x}70")
}

/// Environments by levels, colored by the best agent's normalized median.
pub(super) fn heatmap(table: &SolvabilityTable) -> String {
    let mut grid: BTreeMap<(EnvId, &str), f64> = BTreeMap::new();
    for c in &table.cells {
        let e = grid.entry((c.env, c.level.as_str())).or_insert(-1.0);
        *e = e.max(c.median_normalized);
    }
    let mut envs: Vec<EnvId> = grid.keys().map(|k| k.0).collect();
    envs.dedup();
    let mut levels: Vec<&str> = grid.keys().map(|k| k.1).collect();
    levels.sort();
    levels.dedup();
    let (x0, y0, cw, ch) = (170.0, 40.0, 80.0, 32.0);
    let width = x0 + cw * levels.len() as f64 + 20.0;
    let height = y0 + ch * envs.len() as f64 + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(s, r#"<rect width="{width:.0}" height="{height:.0}" fill="white"/>"#);
    for (j, level) in levels.iter().enumerate() {
        let x = x0 + cw * (j as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
            y0 - 10.0,
            escape(level)
        );
    }
    for (i, env) in envs.iter().enumerate() {
        let y = y0 + ch * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">{}</text>"#,
            x0 - 8.0,
            y + ch * 0.65,
            escape(env.as_str())
        );
        for (j, level) in levels.iter().enumerate() {
            let x = x0 + cw * j as f64;
            match grid.get(&(*env, *level)) {
                Some(v) => {
                    let _ = writeln!(
                        s,
                        r##"<rect x="{x:.2}" y="{y:.2}" width="{cw:.2}" height="{ch:.2}" fill="{}" stroke="#ffffff"/>"##,
                        color(*v)
                    );
                    let _ = writeln!(
                        s,
                        r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{v:.2}</text>"#,
                        x + cw / 2.0,
                        y + ch * 0.65
                    );
                }
                None => {
                    let _ = writeln!(
                        s,
                        r##"<rect x="{x:.2}" y="{y:.2}" width="{cw:.2}" height="{ch:.2}" fill="#eeeeee" stroke="#ffffff"/>"##
                    );
                }
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

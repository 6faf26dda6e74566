//! Static SVG line charts of rainy-versus-clear slot means.

use std::io::{self, Write};

use crate::metrics::{Index, SlotComparison};

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

/// Rainy and clear means of one index over hour of day, for weekdays or
/// weekends. Masked slots are drawn as hollow markers.
pub fn comparison_svg<Wr: Write>(w: Wr, rows: &[SlotComparison], index: Index, weekend: bool) -> io::Result<()> {
    let rows: Vec<&SlotComparison> = rows.iter().filter(|r| r.index == index && r.slot.weekend == weekend).collect();
    let max =
        rows.iter().flat_map(|r| [r.clear_mean, r.rainy_mean]).flatten().fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let x = |h: u32| PAD + f64::from(h) * (W - 2.0 * PAD) / 23.0;
    let y = |v: f64| H - PAD - v / max * (H - 2.0 * PAD);

    let mut out = io::BufWriter::new(w);
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#
    )?;
    let title = format!("{} ({})", index, if weekend { "weekend" } else { "weekday" });
    writeln!(out, r#"<text x="{PAD}" y="20">{title}</text>"#)?;
    writeln!(out, r#"<line x1="{PAD}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#, H - PAD, W - PAD)?;
    writeln!(out, r#"<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{0}" stroke="black"/>"#, H - PAD)?;
    for h in (0..24).step_by(3) {
        writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{h}</text>"#, x(h), H - PAD + 16.0)?;
    }
    writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{max:.2}</text>"#, PAD - 4.0, PAD + 4.0)?;
    for (pick, colour, label) in [(0usize, "#1f77b4", "clear"), (1, "#d62728", "rainy")] {
        let pts: Vec<(u32, f64, bool)> = rows
            .iter()
            .filter_map(|r| {
                let v = if pick == 0 { r.clear_mean } else { r.rainy_mean };
                v.map(|v| (r.slot.hour_of_day, v, r.masked))
            })
            .collect();
        let path: Vec<String> = pts.iter().map(|&(h, v, _)| format!("{:.1},{:.1}", x(h), y(v))).collect();
        writeln!(out, r#"<polyline fill="none" stroke="{colour}" points="{}"/>"#, path.join(" "))?;
        for &(h, v, masked) in &pts {
            let fill = if masked { "white" } else { colour };
            writeln!(out, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{fill}" stroke="{colour}"/>"#, x(h), y(v))?;
        }
        let ly = 20.0 + 14.0 * pick as f64;
        writeln!(out, r#"<text x="{:.1}" y="{ly}" fill="{colour}">{label}</text>"#, W - PAD - 40.0)?;
    }
    writeln!(out, "</svg>")?;
    out.flush()
}

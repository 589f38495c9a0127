//! Gnuplot script for the band diagram beside the density of states.

use std::fmt::Write;

use pnc_core::spectrum::Gap;

/// Script drawing `bands_csv` (left, styled by mirror parity) and `dos_csv`
/// (right) on a shared frequency axis, with each gap shaded in both panels.
/// Paths are taken relative to the directory gnuplot runs in.
pub fn fig1b_script(bands_csv: &str, dos_csv: &str, gaps: &[Gap], f_max: f64, png: &str) -> String {
    let mut s = String::new();
    let mut line = |l: &str| {
        s.push_str(l);
        s.push('\n');
    };
    line("# Band diagram (left) and density of states (right).");
    line("# Colour: parity about y = 0; filled/open marker: even/odd about z = 0.");
    line("set datafile separator \",\"");
    line("set terminal pngcairo size 1000,560 font \",11\"");
    line(&format!("set output \"{png}\""));
    line(&format!("set yrange [0:{f_max}]"));
    line("set key off");
    line("set style rect fc rgb \"#c8c8c8\" fs solid 1.0 noborder");
    for (i, g) in gaps.iter().enumerate() {
        line(&format!("set object {} rect from graph 0, first {} to graph 1, first {} behind", i + 1, g.f_lo, g.f_hi));
    }
    line("zpt(p) = (p eq \"odd\") ? 6 : 7");
    line("set multiplot layout 1,2");
    line("set xrange [0:1]");
    line("set xlabel \"k (pi/a)\"");
    line("set ylabel \"Frequency (GHz)\"");
    let mut plot = String::new();
    for (k, (parity, colour)) in [("even", "#1f5fbf"), ("odd", "#c0392b"), ("mixed", "#7f7f7f")].iter().enumerate() {
        let src = if k == 0 { format!("\"{bands_csv}\"") } else { "\"\"".to_string() };
        let sep = if k == 0 { "plot " } else { ", \\\n     " };
        write!(
            plot,
            "{sep}{src} skip 1 using 1:(strcol(4) eq \"{parity}\" ? $3 : NaN):(zpt(strcol(5))) \
             with points pt variable ps 0.6 lc rgb \"{colour}\""
        )
        .expect("string write");
    }
    line(&plot);
    line("set autoscale x");
    line("set xlabel \"DOS (1/GHz)\"");
    line("set format y \"\"");
    line("unset ylabel");
    line(&format!("plot \"{dos_csv}\" skip 1 using 2:1 with lines lw 1.5 lc rgb \"black\""));
    line("unset multiplot");
    s
}

/// Gap bounds declared by a script written with [`fig1b_script`].
pub fn shaded_intervals(script: &str) -> Vec<(f64, f64)> {
    script
        .lines()
        .filter(|l| l.starts_with("set object") && l.contains(" rect from "))
        .filter_map(|l| {
            let nums: Vec<f64> =
                l.split("first ").skip(1).filter_map(|part| part.split_whitespace().next()?.parse().ok()).collect();
            (nums.len() == 2).then(|| (nums[0], nums[1]))
        })
        .collect()
}

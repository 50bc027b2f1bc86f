//! MATPOWER case-file subset: `mpc.baseMVA`, `mpc.bus`, `mpc.branch`, `mpc.gen`,
//! `mpc.gencost` (polynomial model, at most quadratic), plus two optional extension
//! tables written by [`serialize_case`]:
//!
//! - `mpc.ess = [bus p_min p_max e_min e_max e_initial startup_cost degradation_weight]`
//! - `mpc.load = [bus Pd Qd]`, which replaces the bus-table load columns when present.
//!
//! Shunts, line charging, tap ratios and phase shifts are read but not modelled; each
//! one produces a warning.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::warn;

use super::{Bus, CaseError, EssUnit, Generator, Line, Load, PowerCase};

#[derive(Debug)]
struct Table {
    line: usize,
    rows: Vec<(usize, Vec<f64>)>,
}

#[derive(Debug, Default)]
struct RawCase {
    scalars: BTreeMap<String, (usize, String)>,
    tables: BTreeMap<String, Table>,
}

fn syntax(line: usize, message: impl Into<String>) -> CaseError {
    CaseError::Syntax {
        line,
        message: message.into(),
    }
}

fn parse_number(tok: &str, line: usize) -> Result<f64, CaseError> {
    match tok {
        "Inf" | "inf" | "+Inf" => Ok(f64::INFINITY),
        "-Inf" | "-inf" => Ok(f64::NEG_INFINITY),
        _ => tok
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| syntax(line, format!("invalid number `{tok}`"))),
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn tokenize(text: &str) -> Result<RawCase, CaseError> {
    let mut raw = RawCase::default();
    // (name, table) while inside a matrix literal
    let mut open: Option<(String, Table, Vec<f64>)> = None;

    for (idx, full) in text.lines().enumerate() {
        let lineno = idx + 1;
        let mut rest = strip_comment(full).trim();

        if open.is_none() {
            if rest.is_empty() || rest.starts_with("function") {
                continue;
            }
            let Some(assign) = rest.strip_prefix("mpc.") else {
                return Err(syntax(lineno, format!("unexpected statement `{rest}`")));
            };
            let Some((name, value)) = assign.split_once('=') else {
                return Err(syntax(lineno, "expected `=`"));
            };
            let name = name.trim();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(syntax(lineno, format!("invalid field name `{name}`")));
            }
            let value = value.trim();
            if let Some(body) = value.strip_prefix('[') {
                if raw.tables.contains_key(name) {
                    return Err(syntax(lineno, format!("table `{name}` defined twice")));
                }
                open = Some((
                    name.to_string(),
                    Table {
                        line: lineno,
                        rows: Vec::new(),
                    },
                    Vec::new(),
                ));
                rest = body;
            } else {
                let value = value
                    .strip_suffix(';')
                    .ok_or_else(|| syntax(lineno, "missing `;`"))?
                    .trim();
                raw.scalars
                    .insert(name.to_string(), (lineno, value.to_string()));
                continue;
            }
        }

        let (_, table, row) = open.as_mut().expect("inside matrix");
        let mut closed = false;
        let mut chars = rest;
        while !chars.is_empty() {
            let chars_trim = chars.trim_start_matches([' ', '\t', ',']);
            if chars_trim.is_empty() {
                break;
            }
            if let Some(after) = chars_trim.strip_prefix(';') {
                if !row.is_empty() {
                    table.rows.push((lineno, std::mem::take(row)));
                }
                chars = after;
                continue;
            }
            if let Some(after) = chars_trim.strip_prefix(']') {
                if !row.is_empty() {
                    table.rows.push((lineno, std::mem::take(row)));
                }
                let tail = after.trim();
                if !(tail.is_empty() || tail == ";") {
                    return Err(syntax(lineno, format!("unexpected `{tail}` after `]`")));
                }
                closed = true;
                break;
            }
            let end = chars_trim
                .find([' ', '\t', ',', ';', ']'])
                .unwrap_or(chars_trim.len());
            row.push(parse_number(&chars_trim[..end], lineno)?);
            chars = &chars_trim[end..];
        }
        if !closed && !row.is_empty() {
            // a newline also terminates a matrix row
            table.rows.push((lineno, std::mem::take(row)));
        }
        if closed {
            let (name, table, _) = open.take().expect("inside matrix");
            raw.tables.insert(name, table);
        }
    }
    if let Some((name, table, _)) = open {
        return Err(syntax(table.line, format!("unterminated matrix `{name}`")));
    }
    Ok(raw)
}

fn table<'a>(
    raw: &'a RawCase,
    name: &'static str,
    min_cols: usize,
) -> Result<Option<&'a Table>, CaseError> {
    let Some(t) = raw.tables.get(name) else {
        return Ok(None);
    };
    for (line, row) in &t.rows {
        if row.len() < min_cols {
            return Err(syntax(
                *line,
                format!("`{name}` row has {} columns, expected at least {min_cols}", row.len()),
            ));
        }
    }
    Ok(Some(t))
}

fn required<'a>(raw: &'a RawCase, name: &'static str, min_cols: usize) -> Result<&'a Table, CaseError> {
    table(raw, name, min_cols)?.ok_or(CaseError::MissingTable(name))
}

/// Parses a MATPOWER case; warnings about ignored data are logged.
pub fn parse_matpower_case(text: &str) -> Result<PowerCase, CaseError> {
    let (case, warnings) = parse_matpower_case_with_warnings(text)?;
    for w in &warnings {
        warn!("{w}");
    }
    Ok(case)
}

/// Parses a MATPOWER case and returns the list of ignored-data warnings alongside it.
pub fn parse_matpower_case_with_warnings(text: &str) -> Result<(PowerCase, Vec<String>), CaseError> {
    let raw = tokenize(text)?;
    let mut warnings = Vec::new();

    let base_mva = match raw.scalars.get("baseMVA") {
        Some((line, v)) => parse_number(v, *line)?,
        None => return Err(CaseError::MissingTable("baseMVA")),
    };

    let bus_t = required(&raw, "bus", 13)?;
    let gen_t = required(&raw, "gen", 10)?;
    let branch_t = required(&raw, "branch", 11)?;
    let cost_t = required(&raw, "gencost", 4)?;
    let ess_t = table(&raw, "ess", 8)?;
    let load_t = table(&raw, "load", 3)?;

    let mut buses = Vec::with_capacity(bus_t.rows.len());
    let mut index: BTreeMap<u32, usize> = BTreeMap::new();
    let mut loads = Vec::new();
    let mut vmin = f64::NEG_INFINITY;
    let mut vmax = f64::INFINITY;
    let mut bounds_uniform = true;
    let mut slack_vm = None;
    for (line, row) in &bus_t.rows {
        let id = row[0];
        if id.fract() != 0.0 || id < 1.0 || id > u32::MAX as f64 {
            return Err(syntax(*line, format!("bus number {id} is not a positive integer")));
        }
        let id = id as u32;
        if index.insert(id, buses.len()).is_some() {
            return Err(CaseError::DuplicateBus(id));
        }
        let is_slack = row[1] == 3.0;
        if is_slack {
            slack_vm = Some(row[7]);
        }
        if row[4] != 0.0 || row[5] != 0.0 {
            warnings.push(format!("bus {id}: shunt (Gs={}, Bs={}) ignored", row[4], row[5]));
        }
        if (row[2] != 0.0 || row[3] != 0.0) && load_t.is_none() {
            loads.push(Load {
                bus: buses.len(),
                p_load: row[2],
                q_load: row[3],
            });
        }
        if !buses.is_empty() && (row[11] != vmax || row[12] != vmin) {
            bounds_uniform = false;
        }
        vmax = if buses.is_empty() { row[11] } else { vmax.min(row[11]) };
        vmin = if buses.is_empty() { row[12] } else { vmin.max(row[12]) };
        buses.push(Bus { id, is_slack });
    }
    if buses.is_empty() {
        return Err(CaseError::Empty);
    }
    if !bounds_uniform {
        warnings.push(format!(
            "per-bus voltage limits differ; using the tightest common range [{vmin}, {vmax}]"
        ));
    }
    let resolve = |id: f64, context: String| -> Result<usize, CaseError> {
        if id.fract() == 0.0 && id >= 0.0 {
            if let Some(&i) = index.get(&(id as u32)) {
                return Ok(i);
            }
        }
        Err(CaseError::UnknownBus {
            id: id as i64,
            context,
        })
    };

    let mut lines = Vec::with_capacity(branch_t.rows.len());
    for (line, row) in &branch_t.rows {
        let ctx = || format!("branch at line {line}");
        let f = resolve(row[0], ctx())?;
        let t = resolve(row[1], ctx())?;
        let (r, x) = (row[2], row[3]);
        if row[10] <= 0.0 {
            warnings.push(format!("branch at line {line} is out of service; skipped"));
            continue;
        }
        if r == 0.0 && x == 0.0 {
            return Err(CaseError::ZeroImpedance {
                from: row[0] as u32,
                to: row[1] as u32,
            });
        }
        if f == t {
            return Err(syntax(*line, "branch connects a bus to itself"));
        }
        if row[4] != 0.0 {
            warnings.push(format!("branch at line {line}: line charging b={} ignored", row[4]));
        }
        if row.len() > 8 && row[8] != 0.0 && row[8] != 1.0 {
            warnings.push(format!("branch at line {line}: tap ratio {} ignored", row[8]));
        }
        if row.len() > 9 && row[9] != 0.0 {
            warnings.push(format!("branch at line {line}: phase shift {} ignored", row[9]));
        }
        lines.push(Line::from_impedance(f, t, r, x));
    }

    if cost_t.rows.len() < gen_t.rows.len() {
        return Err(syntax(
            cost_t.line,
            format!(
                "gencost has {} rows for {} generators",
                cost_t.rows.len(),
                gen_t.rows.len()
            ),
        ));
    }
    if cost_t.rows.len() > gen_t.rows.len() {
        warnings.push("reactive power cost rows in gencost ignored".to_string());
    }
    let opt_limit = |v: f64| if v.is_infinite() { None } else { Some(v) };
    let mut generators = Vec::with_capacity(gen_t.rows.len());
    let mut slack_vg = None;
    for ((line, row), (cline, cost)) in gen_t.rows.iter().zip(&cost_t.rows) {
        let bus = resolve(row[0], format!("generator at line {line}"))?;
        if row[7] <= 0.0 {
            warnings.push(format!("generator at line {line} is out of service; skipped"));
            continue;
        }
        if cost[0] != 2.0 {
            return Err(syntax(
                *cline,
                format!("unsupported cost model {} (only polynomial model 2)", cost[0]),
            ));
        }
        let n = cost[3];
        if n.fract() != 0.0 || !(0.0..=3.0).contains(&n) {
            return Err(syntax(
                *cline,
                format!("unsupported polynomial cost with {n} coefficients (at most quadratic)"),
            ));
        }
        let n = n as usize;
        if cost.len() < 4 + n {
            return Err(syntax(*cline, "gencost row is missing coefficients"));
        }
        let mut c = [0.0; 3];
        for k in 0..n {
            c[3 - n + k] = cost[4 + k];
        }
        if buses[bus].is_slack && slack_vg.is_none() {
            slack_vg = Some(row[5]);
        }
        generators.push(Generator {
            bus,
            p_min: row[9],
            p_max: row[8],
            q_min: opt_limit(row[4]),
            q_max: opt_limit(row[3]),
            cost_c2: c[0],
            cost_c1: c[1],
            cost_c0: c[2],
        });
    }

    if let Some(t) = load_t {
        for (line, row) in &t.rows {
            loads.push(Load {
                bus: resolve(row[0], format!("load at line {line}"))?,
                p_load: row[1],
                q_load: row[2],
            });
        }
    }

    let mut ess_units = Vec::new();
    if let Some(t) = ess_t {
        for (line, row) in &t.rows {
            ess_units.push(EssUnit {
                bus: resolve(row[0], format!("ESS at line {line}"))?,
                p_min: row[1],
                p_max: row[2],
                e_min: row[3],
                e_max: row[4],
                e_initial: row[5],
                startup_cost: row[6],
                degradation_weight: row[7],
            });
        }
    }

    let slack_voltage = slack_vg.or(slack_vm).unwrap_or(1.0);
    let case = PowerCase::new(
        base_mva,
        buses,
        lines,
        generators,
        loads,
        ess_units,
        (vmin, vmax),
        slack_voltage,
    )?;
    Ok((case, warnings))
}

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "Inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-Inf".to_string()
    } else {
        format!("{v}")
    }
}

/// True when the load list is exactly what the bus-table columns would produce.
fn loads_fit_bus_table(case: &PowerCase) -> bool {
    case.loads.windows(2).all(|w| w[0].bus < w[1].bus)
        && case.loads.iter().all(|l| l.p_load != 0.0 || l.q_load != 0.0)
}

/// Writes a case in the MATPOWER subset understood by [`parse_matpower_case`].
pub fn serialize_case(case: &PowerCase) -> String {
    let mut out = String::new();
    let slack = case.slack_index();
    let n = case.n_buses();
    let mut pd = vec![0.0; n];
    let mut qd = vec![0.0; n];
    for l in &case.loads {
        pd[l.bus] += l.p_load;
        qd[l.bus] += l.q_load;
    }
    let has_gen: Vec<bool> = (0..n)
        .map(|b| case.generators.iter().any(|g| g.bus == b))
        .collect();
    let explicit_loads = !loads_fit_bus_table(case);
    let (vmin, vmax) = case.voltage_bounds;

    out.push_str("function mpc = case\n");
    out.push_str("mpc.version = '2';\n");
    let _ = writeln!(out, "mpc.baseMVA = {};", num(case.base_mva));

    out.push_str("\n%% bus data\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n");
    out.push_str("mpc.bus = [\n");
    for (i, bus) in case.buses.iter().enumerate() {
        let kind = if bus.is_slack {
            3
        } else if has_gen[i] {
            2
        } else {
            1
        };
        let vm = if i == slack { case.slack_voltage } else { 1.0 };
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t0\t0\t1\t{}\t0\t0\t1\t{}\t{};",
            bus.id,
            kind,
            num(pd[i]),
            num(qd[i]),
            num(vm),
            num(vmax),
            num(vmin)
        );
    }
    out.push_str("];\n");

    out.push_str("\n%% generator data\n%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\n");
    out.push_str("mpc.gen = [\n");
    for g in &case.generators {
        let vg = if g.bus == slack { case.slack_voltage } else { 1.0 };
        let _ = writeln!(
            out,
            "\t{}\t0\t0\t{}\t{}\t{}\t{}\t1\t{}\t{};",
            case.bus_id(g.bus),
            num(g.q_max.unwrap_or(f64::INFINITY)),
            num(g.q_min.unwrap_or(f64::NEG_INFINITY)),
            num(vg),
            num(case.base_mva),
            num(g.p_max),
            num(g.p_min)
        );
    }
    out.push_str("];\n");

    out.push_str("\n%% branch data\n%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\n");
    out.push_str("mpc.branch = [\n");
    for l in &case.lines {
        let (r, x) = l.impedance();
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t0\t0\t0\t0\t0\t0\t1\t-360\t360;",
            case.bus_id(l.from_bus),
            case.bus_id(l.to_bus),
            num(r),
            num(x)
        );
    }
    out.push_str("];\n");

    out.push_str("\n%% generator cost data\n%\t2\tstartup\tshutdown\tn\tc2\tc1\tc0\n");
    out.push_str("mpc.gencost = [\n");
    for g in &case.generators {
        let _ = writeln!(
            out,
            "\t2\t0\t0\t3\t{}\t{}\t{};",
            num(g.cost_c2),
            num(g.cost_c1),
            num(g.cost_c0)
        );
    }
    out.push_str("];\n");

    if !case.ess_units.is_empty() {
        out.push_str("\n%% energy storage\n%\tbus\tPmin\tPmax\tEmin\tEmax\tEinit\tstartup\tdegradation\n");
        out.push_str("mpc.ess = [\n");
        for e in &case.ess_units {
            let _ = writeln!(
                out,
                "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
                case.bus_id(e.bus),
                num(e.p_min),
                num(e.p_max),
                num(e.e_min),
                num(e.e_max),
                num(e.e_initial),
                num(e.startup_cost),
                num(e.degradation_weight)
            );
        }
        out.push_str("];\n");
    }

    if explicit_loads {
        out.push_str("\n%% loads (replace the bus-table Pd/Qd columns)\n%\tbus\tPd\tQd\n");
        out.push_str("mpc.load = [\n");
        for l in &case.loads {
            let _ = writeln!(
                out,
                "\t{}\t{}\t{};",
                case.bus_id(l.bus),
                num(l.p_load),
                num(l.q_load)
            );
        }
        out.push_str("];\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::fixtures::two_bus;

    const TWO_BUS: &str = "\
function mpc = tiny
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0  0 0 0 1 1 0 0 1 1.1 0.9;
  2 1 50 0 0 0 1 1 0 0 1 1.1 0.9;
];
mpc.gen = [
  1 0 0 Inf -Inf 1 100 1 100 0;
];
mpc.branch = [
  1 2 0 0.1 0 0 0 0 0 0 1 -360 360;
];
mpc.gencost = [
  2 0 0 3 0.01 20 0;
];
";

    fn case14_text() -> String {
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/case14.m")).unwrap()
    }

    fn assert_cases_close(a: &PowerCase, b: &PowerCase) {
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * (1.0 + x.abs().max(y.abs()));
        assert_eq!(a.buses, b.buses);
        assert_eq!(a.generators, b.generators);
        assert_eq!(a.loads, b.loads);
        assert_eq!(a.ess_units, b.ess_units);
        assert_eq!(a.voltage_bounds, b.voltage_bounds);
        assert_eq!(a.slack_voltage, b.slack_voltage);
        assert_eq!(a.base_mva, b.base_mva);
        assert_eq!(a.lines.len(), b.lines.len());
        for (la, lb) in a.lines.iter().zip(&b.lines) {
            assert_eq!((la.from_bus, la.to_bus), (lb.from_bus, lb.to_bus));
            assert!(close(la.g, lb.g) && close(la.b, lb.b), "{la:?} vs {lb:?}");
        }
    }

    #[test]
    fn parses_minimal_two_bus() {
        let c = parse_matpower_case(TWO_BUS).unwrap();
        assert_eq!(c.n_buses(), 2);
        assert_eq!(c.lines[0].g, 0.0);
        assert!((c.lines[0].b + 10.0).abs() < 1e-12);
        assert_eq!(c.generators[0].q_min, None);
        assert_eq!(c.loads.len(), 1);
        assert_eq!(c.loads[0].bus, 1);
        assert_cases_close(&c, &two_bus());
    }

    #[test]
    fn parses_case14_counts_and_warnings() {
        let (c, warnings) = parse_matpower_case_with_warnings(&case14_text()).unwrap();
        assert_eq!(c.n_buses(), 14);
        assert_eq!(c.generators.len(), 5);
        assert_eq!(c.lines.len(), 20);
        assert_eq!(c.loads.len(), 11);
        assert_eq!(c.voltage_bounds, (0.94, 1.06));
        assert_eq!(c.slack_voltage, 1.06);
        assert_eq!(c.generators[0].cost_c2, 0.0430293);
        assert_eq!(c.generators[3].q_max, Some(24.0));
        // bus 9 shunt, 5 charged lines + 3 taps
        assert!(warnings.iter().any(|w| w.contains("bus 9: shunt")));
        assert_eq!(warnings.iter().filter(|w| w.contains("tap ratio")).count(), 3);
        assert_eq!(warnings.iter().filter(|w| w.contains("line charging")).count(), 6);
    }

    #[test]
    fn per_unit_conversion_matches_recomputation() {
        let text = case14_text();
        let c = parse_matpower_case(&text).unwrap();
        let raw = tokenize(&text).unwrap();
        for (row, line) in raw.tables["branch"].rows.iter().zip(&c.lines) {
            let (r, x) = (row.1[2], row.1[3]);
            let z2 = r * r + x * x;
            assert_eq!(line.g, r / z2);
            assert_eq!(line.b, -x / z2);
        }
    }

    #[test]
    fn unknown_bus_is_reported() {
        let text = TWO_BUS.replace("1 2 0 0.1", "1 99 0 0.1");
        match parse_matpower_case(&text) {
            Err(CaseError::UnknownBus { id, context }) => {
                assert_eq!(id, 99);
                assert!(context.contains("line 11"), "{context}");
            }
            other => panic!("expected unknown bus, got {other:?}"),
        }
    }

    #[test]
    fn error_taxonomy() {
        let dup = TWO_BUS.replace("  2 1 50", "  1 1 50");
        assert_eq!(parse_matpower_case(&dup).unwrap_err(), CaseError::DuplicateBus(1));

        let zero = TWO_BUS.replace("1 2 0 0.1", "1 2 0 0");
        assert_eq!(
            parse_matpower_case(&zero).unwrap_err(),
            CaseError::ZeroImpedance { from: 1, to: 2 }
        );

        let bad = TWO_BUS.replace("0.01 20 0", "0.01 2x0 0");
        assert_eq!(
            parse_matpower_case(&bad).unwrap_err(),
            CaseError::Syntax {
                line: 14,
                message: "invalid number `2x0`".into()
            }
        );

        let short = TWO_BUS.replace("1 2 0 0.1 0 0 0 0 0 0 1 -360 360", "1 2 0 0.1");
        assert!(matches!(
            parse_matpower_case(&short),
            Err(CaseError::Syntax { line: 11, .. })
        ));

        let unterminated = TWO_BUS.replace("];\nmpc.gencost", "\nmpc.gencost");
        assert!(matches!(
            parse_matpower_case(&unterminated),
            Err(CaseError::Syntax { .. })
        ));

        let no_gen = TWO_BUS.replace("mpc.gen =", "mpc.gens =");
        assert_eq!(parse_matpower_case(&no_gen).unwrap_err(), CaseError::MissingTable("gen"));

        let cubic = TWO_BUS.replace("2 0 0 3 0.01 20 0", "2 0 0 4 1 0.01 20 0");
        assert!(matches!(parse_matpower_case(&cubic), Err(CaseError::Syntax { .. })));

        let no_slack = TWO_BUS.replace("  1 3 0", "  1 1 0");
        assert_eq!(parse_matpower_case(&no_slack).unwrap_err(), CaseError::SlackCount(0));

        let garbage = format!("{TWO_BUS}\nx = 3;\n");
        assert!(matches!(
            parse_matpower_case(&garbage),
            Err(CaseError::Syntax { line: 17, .. })
        ));
    }

    #[test]
    fn matrix_rows_may_span_lines_and_use_commas() {
        let text = TWO_BUS.replace(
            "mpc.gencost = [\n  2 0 0 3 0.01 20 0;\n];",
            "mpc.gencost = [ 2, 0, 0, 3, 0.01, 20, 0 ];",
        );
        let c = parse_matpower_case(&text).unwrap();
        assert_eq!(c.generators[0].cost_c1, 20.0);
    }

    #[test]
    fn round_trip_two_bus_and_case14() {
        let c = two_bus();
        assert_cases_close(&parse_matpower_case(&serialize_case(&c)).unwrap(), &c);
        let c14 = parse_matpower_case(&case14_text()).unwrap();
        let back = parse_matpower_case(&serialize_case(&c14)).unwrap();
        assert_cases_close(&back, &c14);
    }

    #[test]
    fn round_trip_with_extensions() {
        let mut c = two_bus();
        c.loads.push(Load {
            bus: 0,
            p_load: -3.5,
            q_load: 1.25,
        });
        c.loads.push(Load {
            bus: 1,
            p_load: 0.0,
            q_load: 0.0,
        });
        c.ess_units.push(EssUnit {
            bus: 1,
            p_min: -20.0,
            p_max: 15.0,
            e_min: 5.0,
            e_max: 60.0,
            e_initial: 40.0,
            startup_cost: 12.5,
            degradation_weight: 0.01,
        });
        c.generators[0].q_max = Some(30.0);
        let text = serialize_case(&c);
        assert!(text.contains("mpc.ess"));
        assert!(text.contains("mpc.load"));
        assert_cases_close(&parse_matpower_case(&text).unwrap(), &c);
    }
}

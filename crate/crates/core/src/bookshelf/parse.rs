use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use super::{
    tag_macros, BenchmarkCase, BookshelfError, Cell, CellKind, LayoutRegion, Net, Pin,
    DEFAULT_MACRO_AREA_FACTOR,
};

#[derive(Debug, Clone, Copy)]
pub struct ParseOptions {
    /// Treat every terminal as movable (I/O-freed variants).
    pub unfix_terminals: bool,
    pub macro_area_factor: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            unfix_terminals: false,
            macro_area_factor: DEFAULT_MACRO_AREA_FACTOR,
        }
    }
}

pub fn parse_case(aux_path: impl AsRef<Path>) -> Result<BenchmarkCase, BookshelfError> {
    parse_case_with(aux_path, ParseOptions::default())
}

pub fn parse_case_with(
    aux_path: impl AsRef<Path>,
    opts: ParseOptions,
) -> Result<BenchmarkCase, BookshelfError> {
    let aux_path = aux_path.as_ref();
    let aux = read(aux_path)?;
    let dir = aux_path.parent().unwrap_or_else(|| Path::new("."));
    let members = parse_aux(&aux, &file_label(aux_path))?;

    let mut paths = BTreeMap::new();
    paths.insert("aux".to_string(), aux_path.to_path_buf());
    for m in &members {
        let ext = Path::new(m)
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("")
            .to_ascii_lowercase();
        paths.insert(ext, dir.join(m));
    }
    let member = |ext: &str| -> Result<&PathBuf, BookshelfError> {
        paths
            .get(ext)
            .ok_or_else(|| BookshelfError::MissingFile(dir.join(format!("<.{ext} member>"))))
    };

    let nodes_path = member("nodes")?;
    let (mut cells, index) = parse_nodes(&read(nodes_path)?, &file_label(nodes_path))?;

    let pl_path = member("pl")?;
    parse_pl(&read(pl_path)?, &file_label(pl_path), &index, &mut cells)?;

    let nets_path = member("nets")?;
    let mut nets = parse_nets(&read(nets_path)?, &file_label(nets_path), &index)?;

    if let Some(wts_path) = paths.get("wts") {
        if wts_path.exists() {
            parse_wts(&read(wts_path)?, &file_label(wts_path), &mut nets)?;
        }
    }

    let scl_path = member("scl")?;
    let region = parse_scl(&read(scl_path)?, &file_label(scl_path))?;

    if opts.unfix_terminals {
        for c in &mut cells {
            c.kind = CellKind::Movable;
        }
    }
    tag_macros(&mut cells, opts.macro_area_factor);

    let name = aux_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("case")
        .to_string();
    Ok(BenchmarkCase::new(name, cells, nets, region)?.with_source_paths(paths))
}

fn read(path: &Path) -> Result<String, BookshelfError> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            BookshelfError::MissingFile(path.to_path_buf())
        } else {
            BookshelfError::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("?")
        .to_string()
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("UCLA") {
            None
        } else {
            Some((i + 1, line))
        }
    })
}

fn syntax(file: &str, line: usize, token: &str) -> BookshelfError {
    BookshelfError::Syntax {
        file: file.to_string(),
        line,
        token: token.to_string(),
    }
}

fn num(file: &str, line: usize, tok: &str) -> Result<f64, BookshelfError> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(syntax(file, line, tok)),
    }
}

/// Value of a `Key : value` header line.
fn header_value<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(key)?;
    let rest = rest.trim_start();
    let rest = rest.strip_prefix(':')?;
    Some(rest.trim())
}

fn parse_aux(text: &str, file: &str) -> Result<Vec<String>, BookshelfError> {
    for (ln, line) in content_lines(text) {
        let Some((_, rhs)) = line.split_once(':') else {
            return Err(syntax(file, ln, line));
        };
        let members: Vec<String> = rhs.split_whitespace().map(str::to_string).collect();
        if members.is_empty() {
            return Err(syntax(file, ln, line));
        }
        return Ok(members);
    }
    Err(syntax(file, 1, "<empty .aux>"))
}

fn parse_nodes(
    text: &str,
    file: &str,
) -> Result<(Vec<Cell>, HashMap<String, usize>), BookshelfError> {
    let mut cells = Vec::new();
    let mut index = HashMap::new();
    let mut declared: Option<(usize, usize)> = None;
    let mut last_line = 0;
    for (ln, line) in content_lines(text) {
        last_line = ln;
        if let Some(v) = header_value(line, "NumNodes") {
            let n = v.parse().map_err(|_| syntax(file, ln, v))?;
            declared = Some((n, ln));
            continue;
        }
        if header_value(line, "NumTerminals").is_some() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(syntax(file, ln, line));
        }
        let width = num(file, ln, toks[1])?;
        let height = num(file, ln, toks[2])?;
        let kind = match toks.get(3) {
            None => CellKind::Movable,
            Some(&"terminal") | Some(&"terminal_NI") => CellKind::Fixed,
            Some(t) => return Err(syntax(file, ln, t)),
        };
        if index.insert(toks[0].to_string(), cells.len()).is_some() {
            return Err(syntax(file, ln, toks[0]));
        }
        cells.push(Cell {
            name: toks[0].to_string(),
            width,
            height,
            kind,
            pl: None,
        });
    }
    if let Some((n, _)) = declared {
        if n != cells.len() {
            return Err(syntax(
                file,
                last_line,
                &format!("NumNodes {n} != {}", cells.len()),
            ));
        }
    }
    Ok((cells, index))
}

fn parse_pl(
    text: &str,
    file: &str,
    index: &HashMap<String, usize>,
    cells: &mut [Cell],
) -> Result<(), BookshelfError> {
    for (ln, line) in content_lines(text) {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(syntax(file, ln, line));
        }
        let Some(&i) = index.get(toks[0]) else {
            return Err(syntax(file, ln, toks[0]));
        };
        let x = num(file, ln, toks[1])?;
        let y = num(file, ln, toks[2])?;
        cells[i].pl = Some((x, y));
        if toks.iter().any(|t| *t == "/FIXED" || *t == "/FIXED_NI") {
            cells[i].kind = CellKind::Fixed;
        }
    }
    Ok(())
}

fn parse_nets(
    text: &str,
    file: &str,
    index: &HashMap<String, usize>,
) -> Result<Vec<Net>, BookshelfError> {
    let mut nets: Vec<Net> = Vec::new();
    let mut remaining = 0usize;
    let mut open_line = 0usize;
    for (ln, line) in content_lines(text) {
        if header_value(line, "NumNets").is_some() || header_value(line, "NumPins").is_some() {
            continue;
        }
        if let Some(rest) = header_value(line, "NetDegree") {
            if remaining != 0 {
                return Err(syntax(file, open_line, "NetDegree (short pin list)"));
            }
            let mut toks = rest.split_whitespace();
            let degree_tok = toks.next().unwrap_or("");
            let degree: usize = degree_tok
                .parse()
                .map_err(|_| syntax(file, ln, degree_tok))?;
            if degree == 0 {
                return Err(syntax(file, ln, degree_tok));
            }
            let name = toks
                .next()
                .map(str::to_string)
                .unwrap_or_else(|| format!("net{}", nets.len()));
            nets.push(Net {
                name,
                pins: Vec::with_capacity(degree),
                weight: 1.0,
            });
            remaining = degree;
            open_line = ln;
            continue;
        }
        if remaining == 0 {
            return Err(syntax(file, ln, line));
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let cell_name = toks[0];
        let Some(&cell) = index.get(cell_name) else {
            return Err(BookshelfError::DanglingPinReference {
                file: file.to_string(),
                line: ln,
                cell: cell_name.to_string(),
            });
        };
        let (dx, dy) = match toks.iter().position(|t| *t == ":") {
            Some(colon) => {
                let xs = toks.get(colon + 1).ok_or_else(|| syntax(file, ln, line))?;
                let ys = toks.get(colon + 2).ok_or_else(|| syntax(file, ln, line))?;
                (num(file, ln, xs)?, num(file, ln, ys)?)
            }
            None => (0.0, 0.0),
        };
        nets.last_mut()
            .expect("open net")
            .pins
            .push(Pin { cell, dx, dy });
        remaining -= 1;
    }
    if remaining != 0 {
        return Err(syntax(file, open_line, "NetDegree (short pin list)"));
    }
    Ok(nets)
}

fn parse_wts(text: &str, file: &str, nets: &mut [Net]) -> Result<(), BookshelfError> {
    let by_name: HashMap<String, usize> = nets
        .iter()
        .enumerate()
        .map(|(i, n)| (n.name.clone(), i))
        .collect();
    for (ln, line) in content_lines(text) {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 2 {
            return Err(syntax(file, ln, line));
        }
        let w = num(file, ln, toks[1])?;
        if w < 0.0 {
            return Err(syntax(file, ln, toks[1]));
        }
        // Weights for unknown names (e.g. node weights) are ignored.
        if let Some(&i) = by_name.get(toks[0]) {
            nets[i].weight = w;
        }
    }
    Ok(())
}

/// Derives the layout region as the bounding box of all rows.
fn parse_scl(text: &str, file: &str) -> Result<LayoutRegion, BookshelfError> {
    #[derive(Default)]
    struct Row {
        y: Option<f64>,
        height: Option<f64>,
        spacing: Option<f64>,
        width: Option<f64>,
        origin: Option<f64>,
        sites: Option<f64>,
    }
    let mut rows: Vec<(usize, Row)> = Vec::new();
    let mut current: Option<(usize, Row)> = None;
    for (ln, line) in content_lines(text) {
        if line.starts_with("NumRows") {
            continue;
        }
        if line.starts_with("CoreRow") {
            current = Some((ln, Row::default()));
            continue;
        }
        if line == "End" {
            let row = current.take().ok_or_else(|| syntax(file, ln, line))?;
            rows.push(row);
            continue;
        }
        let Some((_, row)) = current.as_mut() else {
            return Err(syntax(file, ln, line));
        };
        if let Some(v) = header_value(line, "Coordinate") {
            row.y = Some(num(file, ln, v)?);
        } else if let Some(v) = header_value(line, "Height") {
            row.height = Some(num(file, ln, v)?);
        } else if let Some(v) = header_value(line, "Sitewidth") {
            row.width = Some(num(file, ln, v)?);
        } else if let Some(v) = header_value(line, "Sitespacing") {
            row.spacing = Some(num(file, ln, v)?);
        } else if line.starts_with("Siteorient") || line.starts_with("Sitesymmetry") {
        } else if let Some(v) = header_value(line, "SubrowOrigin") {
            let toks: Vec<&str> = v.split_whitespace().collect();
            let origin_tok = toks.first().ok_or_else(|| syntax(file, ln, line))?;
            row.origin = Some(num(file, ln, origin_tok)?);
            match toks.iter().position(|t| *t == "NumSites") {
                Some(p) => {
                    let tok = toks.get(p + 2).ok_or_else(|| syntax(file, ln, line))?;
                    row.sites = Some(num(file, ln, tok)?);
                }
                None => return Err(syntax(file, ln, line)),
            }
        } else {
            return Err(syntax(file, ln, line));
        }
    }
    if let Some((ln, _)) = current {
        return Err(syntax(file, ln, "CoreRow without End"));
    }
    if rows.is_empty() {
        return Err(syntax(file, 1, "<no rows>"));
    }
    let (mut xmin, mut ymin) = (f64::INFINITY, f64::INFINITY);
    let (mut xmax, mut ymax) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (ln, r) in &rows {
        let missing = || syntax(file, *ln, "CoreRow (incomplete)");
        let y = r.y.ok_or_else(missing)?;
        let h = r.height.ok_or_else(missing)?;
        let x = r.origin.ok_or_else(missing)?;
        let sites = r.sites.ok_or_else(missing)?;
        let step = r.spacing.or(r.width).ok_or_else(missing)?;
        xmin = xmin.min(x);
        xmax = xmax.max(x + sites * step);
        ymin = ymin.min(y);
        ymax = ymax.max(y + h);
    }
    LayoutRegion::new(xmin, ymin, xmax, ymax)
}

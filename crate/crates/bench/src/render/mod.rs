//! Scenario pictures (PNG for multimodal prompts, ASCII for logs) and the
//! SVG gap chart.

mod chart;
mod font;

pub use chart::{render_chart, svg_chart, ChartError, Series};

use std::collections::BTreeSet;
use std::fmt::Write as _;

use goalassign_core::assignment::GoalLabel;
use goalassign_core::world::{Position, Scenario};
use serde::{Deserialize, Serialize};

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Palette {
    pub background: Rgb,
    pub grid_line: Rgb,
    pub obstacle: Rgb,
    pub goal: Rgb,
    pub agent: Rgb,
    pub label: Rgb,
    pub index: Rgb,
    pub blocker: Rgb,
}

impl Default for Palette {
    fn default() -> Self {
        Palette {
            background: [255, 255, 255],
            grid_line: [190, 190, 190],
            obstacle: [0, 0, 0],
            goal: [220, 30, 30],
            agent: [30, 80, 220],
            label: [250, 250, 250],
            index: [150, 150, 150],
            blocker: [255, 150, 0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderStyle {
    /// Side of one cell in pixels, at least 8.
    pub cell_px: u32,
    pub palette: Palette,
    /// Integer scale of the 5×7 label font for goal and agent labels.
    pub label_scale: u32,
    pub cell_indices: bool,
    pub border_px: u32,
    pub diagonal_blockers: bool,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            cell_px: 32,
            palette: Palette::default(),
            label_scale: 2,
            cell_indices: true,
            border_px: 3,
            diagonal_blockers: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StyleError {
    #[error("cell size must be at least 8 pixels")]
    CellTooSmall,
    #[error("palette entries must be distinct")]
    PaletteClash,
}

impl RenderStyle {
    pub fn check(&self) -> Result<(), StyleError> {
        if self.cell_px < 8 {
            return Err(StyleError::CellTooSmall);
        }
        let p = &self.palette;
        let colors = [
            p.background, p.grid_line, p.obstacle, p.goal, p.agent, p.label, p.index, p.blocker,
        ];
        if colors.iter().collect::<BTreeSet<_>>().len() != colors.len() {
            return Err(StyleError::PaletteClash);
        }
        Ok(())
    }

    fn origin(&self) -> u32 {
        self.border_px
    }

    /// Image side length for an `n`×`n` grid.
    pub fn image_side(&self, n: u32) -> u32 {
        n * self.cell_px + 2 * self.border_px
    }
}

/// Grid corners (in corner coordinates, `(0,0)` top-left of the grid)
/// where two obstacles touch only diagonally.
pub fn diagonal_blockers(scenario: &Scenario) -> Vec<Position> {
    let n = scenario.n();
    let mut corners = Vec::new();
    for r in 0..n.saturating_sub(1) {
        for c in 0..n.saturating_sub(1) {
            let o = |dr, dc| scenario.is_obstacle(Position::new(r + dr, c + dc));
            if (o(0, 0) && o(1, 1)) || (o(0, 1) && o(1, 0)) {
                corners.push(Position::new(r + 1, c + 1));
            }
        }
    }
    corners
}

/// Pixel box `(x, y, w, h)`.
pub type PixelBox = (u32, u32, u32, u32);

/// What goes in each cell, with the pixel box of its text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellLabel {
    pub cell: Position,
    pub text: String,
    pub bounds: PixelBox,
    pub kind: LabelKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Goal,
    Agent,
    Index,
}

fn text_size(text: &str, scale: u32) -> (u32, u32) {
    let chars = text.chars().count() as u32;
    let w = chars * font::WIDTH * scale + chars.saturating_sub(1) * scale;
    (w, font::HEIGHT * scale)
}

/// Places every label centred in its cell, shrinking the font when a label
/// would not fit. Agents are drawn over goals.
pub fn layout_labels(scenario: &Scenario, positions: &[Position], style: &RenderStyle) -> Vec<CellLabel> {
    let n = scenario.n();
    let mut labels = Vec::new();
    let mut occupied = BTreeSet::new();
    let mut place = |cell: Position, text: String, kind: LabelKind, scale: u32| {
        let mut scale = scale.max(1);
        let inner = style.cell_px.saturating_sub(4);
        while scale > 1 && {
            let (w, h) = text_size(&text, scale);
            w > inner || h > inner
        } {
            scale -= 1;
        }
        let (w, h) = text_size(&text, scale);
        let x0 = style.origin() + cell.col * style.cell_px;
        let y0 = style.origin() + cell.row * style.cell_px;
        let x = x0 + style.cell_px.saturating_sub(w) / 2;
        let y = y0 + style.cell_px.saturating_sub(h) / 2;
        labels.push((cell, text, (x, y, w, h), kind, scale));
    };
    for (i, &pos) in positions.iter().enumerate() {
        occupied.insert(pos);
        place(pos, (i + 1).to_string(), LabelKind::Agent, style.label_scale);
    }
    for (j, &g) in scenario.goals().iter().enumerate() {
        if !occupied.contains(&g) {
            occupied.insert(g);
            place(g, GoalLabel::from_index(j).to_string(), LabelKind::Goal, style.label_scale);
        }
    }
    if style.cell_indices {
        for r in 0..n {
            for c in 0..n {
                let cell = Position::new(r, c);
                if !occupied.contains(&cell) && !scenario.is_obstacle(cell) {
                    place(cell, (r * n + c).to_string(), LabelKind::Index, 1);
                }
            }
        }
    }
    labels
        .into_iter()
        .map(|(cell, text, bounds, kind, _)| CellLabel {
            cell,
            text,
            bounds,
            kind,
        })
        .collect()
}

struct Canvas {
    side: u32,
    pixels: Vec<u8>,
}

impl Canvas {
    fn new(side: u32, fill: Rgb) -> Self {
        Canvas {
            side,
            pixels: fill.repeat((side * side) as usize),
        }
    }

    fn put(&mut self, x: u32, y: u32, color: Rgb) {
        if x < self.side && y < self.side {
            let i = ((y * self.side + x) * 3) as usize;
            self.pixels[i..i + 3].copy_from_slice(&color);
        }
    }

    fn rect(&mut self, x: u32, y: u32, w: u32, h: u32, color: Rgb) {
        for yy in y..y + h {
            for xx in x..x + w {
                self.put(xx, yy, color);
            }
        }
    }

    fn disc(&mut self, cx2: i64, cy2: i64, r2: i64, color: Rgb) {
        // Centre and radius in half-pixels so even cell sizes centre exactly.
        let lo = |c: i64| ((c - r2) / 2).max(0) as u32;
        let hi = |c: i64| ((c + r2) / 2 + 1).max(0) as u32;
        for y in lo(cy2)..hi(cy2) {
            for x in lo(cx2)..hi(cx2) {
                let dx = 2 * i64::from(x) + 1 - cx2;
                let dy = 2 * i64::from(y) + 1 - cy2;
                if dx * dx + dy * dy <= r2 * r2 {
                    self.put(x, y, color);
                }
            }
        }
    }

    fn text(&mut self, text: &str, x: u32, y: u32, scale: u32, color: Rgb) {
        for (i, ch) in text.chars().enumerate() {
            let gx = x + i as u32 * (font::WIDTH + 1) * scale;
            for (row, bits) in font::glyph(ch).iter().enumerate() {
                for col in 0..font::WIDTH {
                    if bits & (1 << (font::WIDTH - 1 - col)) != 0 {
                        self.rect(gx + col * scale, y + row as u32 * scale, scale, scale, color);
                    }
                }
            }
        }
    }

    fn encode_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.side, self.side);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().expect("in-memory PNG header");
            writer
                .write_image_data(&self.pixels)
                .expect("in-memory PNG body");
        }
        out
    }
}

/// Raw RGB raster of the scenario with agents at `positions`.
pub fn render_rgb(scenario: &Scenario, positions: &[Position], style: &RenderStyle) -> (u32, Vec<u8>) {
    let n = scenario.n();
    let cell = style.cell_px;
    let o = style.origin();
    let pal = &style.palette;
    let side = style.image_side(n);
    let mut canvas = Canvas::new(side, pal.background);

    canvas.rect(0, 0, side, o, pal.obstacle);
    canvas.rect(0, side - o, side, o, pal.obstacle);
    canvas.rect(0, 0, o, side, pal.obstacle);
    canvas.rect(side - o, 0, o, side, pal.obstacle);
    for i in 1..n {
        canvas.rect(o + i * cell, o, 1, n * cell, pal.grid_line);
        canvas.rect(o, o + i * cell, n * cell, 1, pal.grid_line);
    }

    for &ob in scenario.obstacles() {
        canvas.rect(o + ob.col * cell, o + ob.row * cell, cell, cell, pal.obstacle);
    }
    let inset = (cell / 8).max(1);
    for &g in scenario.goals() {
        canvas.rect(
            o + g.col * cell + inset,
            o + g.row * cell + inset,
            cell - 2 * inset,
            cell - 2 * inset,
            pal.goal,
        );
    }
    for &p in positions {
        let cx2 = 2 * i64::from(o + p.col * cell) + i64::from(cell);
        let cy2 = 2 * i64::from(o + p.row * cell) + i64::from(cell);
        canvas.disc(cx2, cy2, i64::from(cell) - 2 * i64::from(inset), pal.agent);
    }
    if style.diagonal_blockers {
        let half = (cell / 6).max(2);
        for corner in diagonal_blockers(scenario) {
            let x = o + corner.col * cell;
            let y = o + corner.row * cell;
            for d in 0..=half {
                for (dx, dy) in [(d, d), (d, half - d)] {
                    canvas.rect(x + dx - half / 2 - 1, y + dy - half / 2 - 1, 2, 2, pal.blocker);
                }
            }
        }
    }
    for label in layout_labels(scenario, positions, style) {
        let color = match label.kind {
            LabelKind::Index => pal.index,
            _ => pal.label,
        };
        let (x, y, _, h) = label.bounds;
        let scale = h / font::HEIGHT;
        canvas.text(&label.text, x, y, scale, color);
    }
    (side, canvas.pixels)
}

/// PNG bytes of the scenario. Deterministic for fixed inputs.
pub fn render_image(scenario: &Scenario, positions: &[Position], style: &RenderStyle) -> Vec<u8> {
    let (side, pixels) = render_rgb(scenario, positions, style);
    Canvas { side, pixels }.encode_png()
}

/// One character per cell: `#` obstacle, goal letter, agent digit, `.`.
///
/// Agents past 9 print as `*` and goals past `Z` as `+`; a legend follows
/// the grid whenever a glyph is ambiguous or an agent hides a goal.
pub fn render_ascii(scenario: &Scenario, positions: &[Position]) -> String {
    let n = scenario.n();
    let mut legend = Vec::new();
    let mut grid = vec![vec!['.'; n as usize]; n as usize];
    for &ob in scenario.obstacles() {
        grid[ob.row as usize][ob.col as usize] = '#';
    }
    for (j, g) in scenario.goals().iter().enumerate() {
        let label = GoalLabel::from_index(j).to_string();
        let ch = if j < 26 { label.chars().next().unwrap_or('+') } else { '+' };
        if j >= 26 {
            legend.push(format!("+ = goal {label} at {g}"));
        }
        grid[g.row as usize][g.col as usize] = ch;
    }
    for (i, p) in positions.iter().enumerate() {
        let ch = if i < 9 {
            char::from_digit(i as u32 + 1, 10).unwrap_or('*')
        } else {
            legend.push(format!("* = agent {} at {p}", i + 1));
            '*'
        };
        if let Some(j) = scenario.goals().iter().position(|g| g == p) {
            legend.push(format!("agent {} is on goal {}", i + 1, GoalLabel::from_index(j)));
        }
        grid[p.row as usize][p.col as usize] = ch;
    }
    let mut out = String::new();
    for row in grid {
        out.extend(row);
        out.push('\n');
    }
    for line in legend {
        let _ = writeln!(out, "{line}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use goalassign_core::world::{self, ScenarioDistribution};

    fn p(r: u32, c: u32) -> Position {
        Position::new(r, c)
    }

    fn corridor() -> Scenario {
        let walls = (1..5).flat_map(|r| (0..5).map(move |c| p(r, c)));
        Scenario::new(5, vec![p(0, 2), p(0, 0)], vec![p(0, 3), p(0, 4)], walls, 0).unwrap()
    }

    fn count_color(pixels: &[u8], color: Rgb) -> usize {
        pixels.chunks(3).filter(|px| *px == color).count()
    }

    #[test]
    fn ascii_corridor() {
        let s = corridor();
        let text = render_ascii(&s, s.agents());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "2.1AB");
        assert!(lines[1..].iter().all(|l| *l == "#####"));
    }

    #[test]
    fn ascii_agent_over_goal() {
        // A 1×1 grid cannot host an agent and a goal; show the co-location
        // with the agent moved onto its goal.
        let s = Scenario::new(2, vec![p(0, 0)], vec![p(1, 1)], [], 0).unwrap();
        let text = render_ascii(&s, &[p(1, 1)]);
        assert_eq!(text.lines().nth(1), Some(".1"));
        assert!(text.contains("agent 1 is on goal A"));
    }

    #[test]
    fn ascii_many_agents_use_star() {
        let agents: Vec<_> = (0..10).map(|c| p(0, c)).collect();
        let goals: Vec<_> = (0..10).map(|c| p(9, c)).collect();
        let s = Scenario::new(10, agents, goals, [], 0).unwrap();
        let text = render_ascii(&s, s.agents());
        assert!(text.starts_with("123456789*\n"));
        assert!(text.contains("* = agent 10 at (0,9)"));
    }

    #[test]
    fn ascii_border_frame() {
        let mut walls = Vec::new();
        for i in 0..4 {
            walls.extend([p(0, i), p(3, i), p(i, 0), p(i, 3)]);
        }
        walls.sort();
        walls.dedup();
        let s = Scenario::new(4, vec![p(1, 1)], vec![p(2, 2)], walls, 0).unwrap();
        assert_eq!(render_ascii(&s, s.agents()), "####\n#1.#\n#.A#\n####\n");
    }

    #[test]
    fn tiny_image_has_one_circle_and_one_square() {
        let s = Scenario::new(2, vec![p(0, 0)], vec![p(1, 1)], [], 0).unwrap();
        let style = RenderStyle {
            cell_indices: false,
            ..RenderStyle::default()
        };
        let (side, px) = render_rgb(&s, s.agents(), &style);
        assert_eq!(side, 70);
        let pal = &style.palette;
        assert!(count_color(&px, pal.agent) > 0);
        assert!(count_color(&px, pal.goal) > 0);
        // Agent pixels confined to the top-left cell, goal pixels to the
        // bottom-right one.
        for (i, chunk) in px.chunks(3).enumerate() {
            let (x, y) = (i as u32 % side, i as u32 / side);
            if chunk == pal.agent {
                assert!(x < 35 && y < 35);
            }
            if chunk == pal.goal {
                assert!(x >= 35 && y >= 35);
            }
        }
        let a = render_image(&s, s.agents(), &RenderStyle::default());
        let b = render_image(&s, s.agents(), &RenderStyle::default());
        assert_eq!(a, b);
        assert_eq!(&a[..8], b"\x89PNG\r\n\x1a\n");
    }

    #[test]
    fn one_blocker_between_diagonal_obstacles() {
        let s = Scenario::new(3, vec![p(0, 2)], vec![p(2, 0)], [p(0, 0), p(1, 1)], 0).unwrap();
        assert_eq!(diagonal_blockers(&s), vec![p(1, 1)]);
        let on = render_rgb(&s, s.agents(), &RenderStyle::default()).1;
        assert!(count_color(&on, RenderStyle::default().palette.blocker) > 0);
        let off = RenderStyle {
            diagonal_blockers: false,
            ..RenderStyle::default()
        };
        let px = render_rgb(&s, s.agents(), &off).1;
        assert_eq!(count_color(&px, off.palette.blocker), 0);
    }

    #[test]
    fn orthogonal_obstacles_need_no_blocker() {
        let s = Scenario::new(3, vec![p(2, 2)], vec![p(2, 0)], [p(0, 0), p(0, 1)], 0).unwrap();
        assert!(diagonal_blockers(&s).is_empty());
    }

    #[test]
    fn default_scale_labels_stay_inside_their_cells() {
        let style = RenderStyle::default();
        for seed in 0..20 {
            let s = world::generate(&ScenarioDistribution::standard(), seed).unwrap();
            let labels = layout_labels(&s, s.agents(), &style);
            let cells: BTreeSet<_> = labels.iter().map(|l| l.cell).collect();
            assert_eq!(cells.len(), labels.len(), "one label per cell");
            for l in &labels {
                let (x, y, w, h) = l.bounds;
                let x0 = style.origin() + l.cell.col * style.cell_px;
                let y0 = style.origin() + l.cell.row * style.cell_px;
                assert!(x >= x0 && x + w <= x0 + style.cell_px, "{l:?}");
                assert!(y >= y0 && y + h <= y0 + style.cell_px, "{l:?}");
            }
            assert_eq!(labels.iter().filter(|l| l.kind == LabelKind::Agent).count(), s.k());
        }
    }

    #[test]
    fn style_checks() {
        assert!(RenderStyle::default().check().is_ok());
        let small = RenderStyle {
            cell_px: 7,
            ..RenderStyle::default()
        };
        assert_eq!(small.check(), Err(StyleError::CellTooSmall));
        let mut clash = RenderStyle::default();
        clash.palette.goal = clash.palette.agent;
        assert_eq!(clash.check(), Err(StyleError::PaletteClash));
    }
}

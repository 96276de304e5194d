use std::collections::VecDeque;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, RngCore};

use super::{EnvState, Environment, StepResult, TerminalCause};
use crate::error::{Error, Result};
use crate::nn::Features;

pub const GRID1_MAP: &str = include_str!("../../maps/grid1.map");
pub const GRID2_MAP: &str = include_str!("../../maps/grid2.map");
pub const FIVEROOMS_MAP: &str = include_str!("../../maps/fiverooms.map");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAction {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [GridAction::Up, GridAction::Down, GridAction::Left, GridAction::Right];

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("invalid grid action {i}")))
    }
}

/// Grid layout plus room metadata. Rooms are the connected floor regions
/// once door cells are treated as walls.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    pub name: String,
    pub width: usize,
    pub height: usize,
    walls: Vec<bool>,
    pub start: Cell,
    pub goal: Cell,
    pub step_penalty: f64,
    pub goal_bonus: f64,
    pub max_steps: u32,
    pub doors: Vec<Cell>,
    pub room_labels: Vec<(String, Cell)>,
    pub wrong_option: Option<usize>,
    room_of: Vec<Option<usize>>,
    n_rooms: usize,
}

impl GridWorld {
    fn idx(&self, c: Cell) -> usize {
        c.row * self.width + c.col
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn is_wall(&self, c: Cell) -> bool {
        self.walls[self.idx(c)]
    }

    pub fn is_door(&self, c: Cell) -> bool {
        self.doors.contains(&c)
    }

    pub fn n_rooms(&self) -> usize {
        self.n_rooms
    }

    /// Room id of a non-door floor cell.
    pub fn room_of(&self, c: Cell) -> Option<usize> {
        self.room_of[self.idx(c)]
    }

    /// Rooms a cell belongs to: its own room, or both rooms a door joins.
    pub fn rooms_of(&self, c: Cell) -> Vec<usize> {
        if let Some(r) = self.room_of(c) {
            return vec![r];
        }
        if self.is_door(c) {
            let mut rooms: Vec<usize> = self.neighbors(c).filter_map(|n| self.room_of(n)).collect();
            rooms.sort_unstable();
            rooms.dedup();
            return rooms;
        }
        Vec::new()
    }

    pub fn room_label(&self, room: usize) -> Option<&str> {
        self.room_labels
            .iter()
            .find(|(_, c)| self.room_of(*c) == Some(room))
            .map(|(l, _)| l.as_str())
    }

    fn neighbors(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        GridAction::ALL.iter().filter_map(move |a| {
            let n = self.move_cell(c, *a);
            (n != c).then_some(n)
        })
    }

    /// The cell reached by moving; walls and the border leave the agent in place.
    pub fn move_cell(&self, c: Cell, action: GridAction) -> Cell {
        let (r, col) = (c.row as isize, c.col as isize);
        let (nr, nc) = match action {
            GridAction::Up => (r - 1, col),
            GridAction::Down => (r + 1, col),
            GridAction::Left => (r, col - 1),
            GridAction::Right => (r, col + 1),
        };
        if nr < 0 || nc < 0 || nr >= self.height as isize || nc >= self.width as isize {
            return c;
        }
        let n = Cell::new(nr as usize, nc as usize);
        if self.is_wall(n) {
            c
        } else {
            n
        }
    }

    pub fn cell_index(&self, c: Cell) -> usize {
        self.idx(c)
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.width, index % self.width)
    }

    pub fn features(&self, c: Cell) -> Features {
        Features::OneHot {
            index: self.idx(c),
            len: self.n_cells(),
        }
    }

    pub fn floor_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.n_cells()).map(|i| self.cell_at(i)).filter(|c| !self.is_wall(*c))
    }

    /// BFS distances to `target` over cells accepted by `allowed`.
    pub fn distances_to(&self, target: Cell, allowed: impl Fn(Cell) -> bool) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.n_cells()];
        dist[self.idx(target)] = Some(0);
        let mut queue = VecDeque::from([target]);
        while let Some(c) = queue.pop_front() {
            let d = dist[self.idx(c)].unwrap();
            for n in self.neighbors(c) {
                if dist[self.idx(n)].is_none() && allowed(n) {
                    dist[self.idx(n)] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// First action (in index order) that decreases the distance field.
    fn descend(&self, c: Cell, dist: &[Option<u32>]) -> Option<GridAction> {
        let here = dist[self.idx(c)]?;
        GridAction::ALL.iter().copied().find(|a| {
            let n = self.move_cell(c, *a);
            n != c && dist[self.idx(n)].is_some_and(|d| d + 1 == here)
        })
    }
}

/// Parses the ASCII map format: `#` wall, `.` floor, `S` start, `G` goal,
/// followed by optional `; key=value` metadata lines.
pub fn load_map(text: &str) -> Result<GridWorld> {
    let mut rows: Vec<&str> = Vec::new();
    let mut meta: Vec<(&str, &str)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix(';') {
            let (k, v) = rest
                .trim()
                .split_once('=')
                .ok_or_else(|| Error::Map(format!("line {}: metadata must be key=value", lineno + 1)))?;
            meta.push((k.trim(), v.trim()));
        } else if !line.is_empty() {
            if !meta.is_empty() {
                return Err(Error::Map(format!("line {}: map row after metadata", lineno + 1)));
            }
            rows.push(line);
        }
    }
    if rows.is_empty() {
        return Err(Error::Map("empty map".into()));
    }
    let width = rows[0].chars().count();
    let height = rows.len();
    let mut walls = Vec::with_capacity(width * height);
    let (mut start, mut goal) = (None, None);
    for (r, row) in rows.iter().enumerate() {
        if row.chars().count() != width {
            return Err(Error::Map(format!("ragged row {r}: expected width {width}")));
        }
        for (c, ch) in row.chars().enumerate() {
            let cell = Cell::new(r, c);
            match ch {
                '#' => walls.push(true),
                '.' => walls.push(false),
                'S' | 'G' => {
                    walls.push(false);
                    let slot = if ch == 'S' { &mut start } else { &mut goal };
                    if slot.replace(cell).is_some() {
                        return Err(Error::Map(format!("duplicate '{ch}'")));
                    }
                }
                other => return Err(Error::Map(format!("unexpected character '{other}' at row {r}"))),
            }
        }
    }
    let start = start.ok_or_else(|| Error::Map("missing 'S'".into()))?;
    let goal = goal.ok_or_else(|| Error::Map("missing 'G'".into()))?;

    let mut world = GridWorld {
        name: "map".into(),
        width,
        height,
        walls,
        start,
        goal,
        step_penalty: -1.0,
        goal_bonus: 100.0,
        max_steps: 500,
        doors: Vec::new(),
        room_labels: Vec::new(),
        wrong_option: None,
        room_of: Vec::new(),
        n_rooms: 0,
    };
    let parse_cell = |v: &str| -> Result<Cell> {
        let (r, c) = v.split_once(',').ok_or_else(|| Error::Map(format!("bad cell '{v}'")))?;
        let r = r.trim().parse().map_err(|_| Error::Map(format!("bad cell '{v}'")))?;
        let c = c.trim().parse().map_err(|_| Error::Map(format!("bad cell '{v}'")))?;
        if r >= height || c >= width {
            return Err(Error::Map(format!("cell '{v}' outside the map")));
        }
        Ok(Cell::new(r, c))
    };
    let num = |k: &str, v: &str| -> Result<f64> {
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::Map(format!("bad number for {k}: '{v}'")))
    };
    for (k, v) in meta {
        match k {
            "name" => world.name = v.to_string(),
            "step_penalty" => world.step_penalty = num(k, v)?,
            "goal_bonus" => world.goal_bonus = num(k, v)?,
            "max_steps" => {
                world.max_steps = v.parse().map_err(|_| Error::Map(format!("bad max_steps '{v}'")))?
            }
            "door" => {
                let c = parse_cell(v)?;
                if world.is_wall(c) {
                    return Err(Error::Map(format!("door {v} is a wall")));
                }
                world.doors.push(c);
            }
            "room" => {
                let (label, cell) = v
                    .split_once('@')
                    .ok_or_else(|| Error::Map(format!("room must be label@row,col, got '{v}'")))?;
                world.room_labels.push((label.to_string(), parse_cell(cell)?));
            }
            "wrong_option" => {
                world.wrong_option = Some(v.parse().map_err(|_| Error::Map(format!("bad wrong_option '{v}'")))?)
            }
            other => return Err(Error::Map(format!("unknown metadata key '{other}'"))),
        }
    }
    if world.max_steps == 0 {
        return Err(Error::Map("max_steps must be positive".into()));
    }
    label_rooms(&mut world)?;
    Ok(world)
}

fn label_rooms(world: &mut GridWorld) -> Result<()> {
    let n = world.n_cells();
    let mut room_of = vec![None; n];
    let mut n_rooms = 0;
    for i in 0..n {
        let c = world.cell_at(i);
        if world.is_wall(c) || world.is_door(c) || room_of[i].is_some() {
            continue;
        }
        room_of[i] = Some(n_rooms);
        let mut queue = VecDeque::from([c]);
        while let Some(cur) = queue.pop_front() {
            for nb in world.neighbors(cur).collect::<Vec<_>>() {
                let j = world.idx(nb);
                if room_of[j].is_none() && !world.is_door(nb) {
                    room_of[j] = Some(n_rooms);
                    queue.push_back(nb);
                }
            }
        }
        n_rooms += 1;
    }
    world.room_of = room_of;
    world.n_rooms = n_rooms;
    for d in &world.doors {
        if world.rooms_of(*d).len() != 2 {
            return Err(Error::Map(format!(
                "door at {},{} must join exactly two rooms",
                d.row, d.col
            )));
        }
    }
    for (label, c) in &world.room_labels {
        if world.room_of(*c).is_none() {
            return Err(Error::Map(format!("room label '{label}' is not on a room cell")));
        }
    }
    if let Some(w) = world.wrong_option {
        if w >= world.doors.len() {
            return Err(Error::Map(format!("wrong_option {w} is not a door option")));
        }
    }
    Ok(())
}

/// Inverse of [`load_map`] for maps in canonical form.
pub fn render_map(world: &GridWorld) -> String {
    let mut out = String::new();
    for r in 0..world.height {
        for c in 0..world.width {
            let cell = Cell::new(r, c);
            out.push(if cell == world.start {
                'S'
            } else if cell == world.goal {
                'G'
            } else if world.is_wall(cell) {
                '#'
            } else {
                '.'
            });
        }
        out.push('\n');
    }
    let _ = writeln!(out, "; name={}", world.name);
    let _ = writeln!(out, "; step_penalty={}", world.step_penalty);
    let _ = writeln!(out, "; goal_bonus={}", world.goal_bonus);
    let _ = writeln!(out, "; max_steps={}", world.max_steps);
    for d in &world.doors {
        let _ = writeln!(out, "; door={},{}", d.row, d.col);
    }
    for (label, c) in &world.room_labels {
        let _ = writeln!(out, "; room={label}@{},{}", c.row, c.col);
    }
    if let Some(w) = world.wrong_option {
        let _ = writeln!(out, "; wrong_option={w}");
    }
    out
}

/// Minimal number of primitive moves from start to goal.
pub fn bfs_shortest_path(world: &GridWorld) -> Option<u32> {
    world.distances_to(world.goal, |_| true)[world.cell_index(world.start)]
}

/// Per-cell decision table pointing along a shortest path to the goal.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPolicy {
    actions: Vec<Option<usize>>,
    width: usize,
}

impl GridPolicy {
    pub fn get(&self, c: Cell) -> Option<usize> {
        self.actions[c.row * self.width + c.col]
    }
}

/// Primitive-action oracle. Errors if a floor cell cannot reach the goal.
pub fn optimal_grid_policy(world: &GridWorld) -> Result<GridPolicy> {
    let dist = world.distances_to(world.goal, |_| true);
    let mut actions = vec![None; world.n_cells()];
    for c in world.floor_cells() {
        if dist[world.cell_index(c)].is_none() {
            return Err(Error::Map(format!("cell {},{} cannot reach the goal", c.row, c.col)));
        }
        if c != world.goal {
            actions[world.cell_index(c)] = world.descend(c, &dist).map(|a| a as usize);
        }
    }
    Ok(GridPolicy {
        actions,
        width: world.width,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionKind {
    /// Leads to a door from either of the rooms it joins.
    Door { door: usize, rooms: (usize, usize) },
    /// Leads to the goal from inside the goal's room.
    Goal { room: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOption {
    pub kind: OptionKind,
    pub target: Cell,
    dist: Vec<Option<u32>>,
}

/// Door options in metadata order, then the goal option.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionSet {
    pub options: Vec<GridOption>,
    goal_dist: Vec<Option<u32>>,
}

impl OptionSet {
    pub fn new(world: &GridWorld) -> Result<Self> {
        let goal_room = world
            .room_of(world.goal)
            .ok_or_else(|| Error::Map("goal must lie inside a room".into()))?;
        let mut options = Vec::new();
        for (i, door) in world.doors.iter().enumerate() {
            let rooms = world.rooms_of(*door);
            let (a, b) = (rooms[0], rooms[1]);
            let dist = world.distances_to(*door, |c| world.rooms_of(c).iter().any(|r| *r == a || *r == b));
            options.push(GridOption {
                kind: OptionKind::Door { door: i, rooms: (a, b) },
                target: *door,
                dist,
            });
        }
        let dist = world.distances_to(world.goal, |c| world.rooms_of(c).contains(&goal_room));
        options.push(GridOption {
            kind: OptionKind::Goal { room: goal_room },
            target: world.goal,
            dist,
        });
        Ok(Self {
            options,
            goal_dist: world.distances_to(world.goal, |_| true),
        })
    }

    pub fn len(&self) -> usize {
        self.options.len()
    }

    pub fn is_empty(&self) -> bool {
        self.options.is_empty()
    }

    pub fn applicable(&self, world: &GridWorld, option: usize, c: Cell) -> bool {
        let o = &self.options[option];
        if c == o.target {
            return false;
        }
        let rooms = world.rooms_of(c);
        let ok = match o.kind {
            OptionKind::Door { rooms: (a, b), .. } => rooms.iter().any(|r| *r == a || *r == b),
            OptionKind::Goal { room } => rooms.contains(&room),
        };
        ok && o.dist[world.cell_index(c)].is_some()
    }

    /// Primitive moves the option takes from `c`, when applicable.
    pub fn path_length(&self, world: &GridWorld, option: usize, c: Cell) -> Option<u32> {
        if !self.applicable(world, option, c) {
            return None;
        }
        self.options[option].dist[world.cell_index(c)]
    }

    /// Option-level oracle: the applicable option minimizing path length to
    /// its target plus the target's distance to the goal.
    pub fn optimal_policy(&self, world: &GridWorld) -> GridPolicy {
        let mut actions = vec![None; world.n_cells()];
        for c in world.floor_cells() {
            if c == world.goal {
                continue;
            }
            let mut best: Option<(u32, usize)> = None;
            for i in 0..self.len() {
                let Some(len) = self.path_length(world, i, c) else { continue };
                let Some(rest) = self.goal_dist[world.cell_index(self.options[i].target)] else { continue };
                if best.is_none_or(|(b, _)| len + rest < b) {
                    best = Some((len + rest, i));
                }
            }
            actions[world.cell_index(c)] = best.map(|(_, i)| i);
        }
        GridPolicy {
            actions,
            width: world.width,
        }
    }
}

/// Executes one option from `cell`. `steps_taken` counts primitive moves so
/// far in the episode. Returns the new cell and the accumulated step result.
pub fn option_step<R: Rng + ?Sized>(
    world: &GridWorld,
    options: &OptionSet,
    cell: Cell,
    option: usize,
    steps_taken: u32,
    rng: &mut R,
) -> Result<(Cell, StepResult)> {
    if option >= options.len() {
        return Err(Error::InvalidArgument(format!("invalid option {option}")));
    }
    let mut cur = cell;
    let mut steps = steps_taken;
    let mut reward = 0.0;
    let mut consumed = 0;
    let mut terminal = None;
    if options.applicable(world, option, cell) {
        let target = options.options[option].target;
        let dist = &options.options[option].dist;
        while cur != target {
            let a = world
                .descend(cur, dist)
                .expect("option distance field is consistent");
            let (next, r, t) = primitive_move(world, cur, a, steps + 1);
            cur = next;
            steps += 1;
            consumed += 1;
            reward += r;
            if t.is_some() {
                terminal = t;
                break;
            }
        }
    } else {
        let a = GridAction::ALL[rng.random_range(0..4)];
        let (next, r, t) = primitive_move(world, cur, a, steps + 1);
        cur = next;
        consumed = 1;
        reward = r;
        terminal = t;
    }
    Ok((
        cur,
        StepResult {
            observation: world.features(cur),
            reward,
            terminal,
            primitive_steps: consumed,
        },
    ))
}

fn primitive_move(world: &GridWorld, cell: Cell, a: GridAction, steps_after: u32) -> (Cell, f64, Option<TerminalCause>) {
    let next = world.move_cell(cell, a);
    if next == world.goal {
        return (next, world.step_penalty + world.goal_bonus, Some(TerminalCause::Goal));
    }
    let t = (steps_after >= world.max_steps).then_some(TerminalCause::Timeout);
    (next, world.step_penalty, t)
}

/// Grid world episode driver, acting either with primitive moves or options.
#[derive(Debug, Clone)]
pub struct GridEnv {
    world: Arc<GridWorld>,
    options: Option<Arc<OptionSet>>,
    cell: Cell,
    steps: u32,
}

impl GridEnv {
    pub fn new(world: Arc<GridWorld>) -> Self {
        let cell = world.start;
        Self {
            world,
            options: None,
            cell,
            steps: 0,
        }
    }

    pub fn with_options(world: Arc<GridWorld>) -> Result<Self> {
        let options = Arc::new(OptionSet::new(&world)?);
        let cell = world.start;
        Ok(Self {
            world,
            options: Some(options),
            cell,
            steps: 0,
        })
    }

    pub fn world(&self) -> &Arc<GridWorld> {
        &self.world
    }

    pub fn options(&self) -> Option<&Arc<OptionSet>> {
        self.options.as_ref()
    }

    pub fn cell(&self) -> Cell {
        self.cell
    }

    pub fn set_cell(&mut self, c: Cell) {
        self.cell = c;
    }

    /// Oracle matching this environment's action set.
    pub fn optimal_policy(&self) -> Result<GridPolicy> {
        match &self.options {
            Some(o) => Ok(o.optimal_policy(&self.world)),
            None => optimal_grid_policy(&self.world),
        }
    }
}

/// Moves one cell. `steps_after` includes this move, for the timeout.
pub fn grid_step(world: &GridWorld, cell: Cell, action: usize, steps_after: u32) -> Result<(Cell, StepResult)> {
    let a = GridAction::from_index(action)?;
    let (next, reward, terminal) = primitive_move(world, cell, a, steps_after);
    Ok((
        next,
        StepResult {
            observation: world.features(next),
            reward,
            terminal,
            primitive_steps: 1,
        },
    ))
}

impl Environment for GridEnv {
    fn n_actions(&self) -> usize {
        match &self.options {
            Some(o) => o.len(),
            None => 4,
        }
    }

    fn obs_dim(&self) -> usize {
        self.world.n_cells()
    }

    fn reset(&mut self) -> Features {
        self.cell = self.world.start;
        self.steps = 0;
        self.world.features(self.cell)
    }

    fn step(&mut self, action: usize, rng: &mut dyn RngCore) -> Result<StepResult> {
        let (next, res) = match &self.options {
            Some(o) => option_step(&self.world, o, self.cell, action, self.steps, rng)?,
            None => grid_step(&self.world, self.cell, action, self.steps + 1)?,
        };
        self.cell = next;
        self.steps += res.primitive_steps;
        Ok(res)
    }

    fn state(&self) -> EnvState {
        EnvState::Grid(self.cell)
    }

    fn observation(&self) -> Features {
        self.world.features(self.cell)
    }
}

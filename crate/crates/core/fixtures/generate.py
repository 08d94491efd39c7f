"""Regenerates the bundled MovingAI-format fixtures. Deterministic."""
import random
from collections import deque
from pathlib import Path

HERE = Path(__file__).resolve().parent


def bfs(grid, src):
    h, w = len(grid), len(grid[0])
    dist = {src: 0}
    q = deque([src])
    while q:
        x, y = q.popleft()
        for nx, ny in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if 0 <= nx < w and 0 <= ny < h and grid[ny][nx] == '.' and (nx, ny) not in dist:
                dist[(nx, ny)] = dist[(x, y)] + 1
                q.append((nx, ny))
    return dist


def keep_largest_component(grid):
    h, w = len(grid), len(grid[0])
    seen, best = set(), set()
    for y in range(h):
        for x in range(w):
            if grid[y][x] == '.' and (x, y) not in seen:
                comp = set(bfs(grid, (x, y)))
                seen |= comp
                if len(comp) > len(best):
                    best = comp
    for y in range(h):
        for x in range(w):
            if grid[y][x] == '.' and (x, y) not in best:
                grid[y][x] = '@'
    return grid


def random_map(w, h, pct, rng):
    cells = [(x, y) for y in range(h) for x in range(w)]
    grid = [['.'] * w for _ in range(h)]
    for x, y in rng.sample(cells, int(round(w * h * pct / 100))):
        grid[y][x] = '@'
    return keep_largest_component(grid)


def maze_map(w, h, corridor, rng):
    step = corridor + 1
    cw, ch = (w - 1) // step, (h - 1) // step
    grid = [['@'] * w for _ in range(h)]

    def carve(cx, cy):
        for dy in range(corridor):
            for dx in range(corridor):
                grid[1 + cy * step + dy][1 + cx * step + dx] = '.'

    seen = {(0, 0)}
    stack = [(0, 0)]
    carve(0, 0)
    while stack:
        cx, cy = stack[-1]
        nbrs = [(cx + dx, cy + dy) for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))
                if 0 <= cx + dx < cw and 0 <= cy + dy < ch and (cx + dx, cy + dy) not in seen]
        if not nbrs:
            stack.pop()
            continue
        nx, ny = rng.choice(nbrs)
        carve(nx, ny)
        # open the wall between the two cells
        if nx != cx:
            wx = 1 + max(cx, nx) * step - 1
            for dy in range(corridor):
                grid[1 + cy * step + dy][wx] = '.'
        else:
            wy = 1 + max(cy, ny) * step - 1
            for dx in range(corridor):
                grid[wy][1 + cx * step + dx] = '.'
        seen.add((nx, ny))
        stack.append((nx, ny))
    return grid


def den_excerpt(rng):
    """Indoor-game style rooms with tree tiles, trimmed to 40x30."""
    w, h = 40, 30
    grid = [['.'] * w for _ in range(h)]
    for x in range(w):
        grid[0][x] = grid[h - 1][x] = 'T'
    for y in range(h):
        grid[y][0] = grid[y][w - 1] = 'T'
    for x in range(1, w - 1):
        if x not in (6, 7, 25, 26):
            grid[12][x] = '@'
    for y in range(1, h - 1):
        if y not in (5, 6, 20, 21):
            grid[y][18] = '@'
    for _ in range(40):
        x, y = rng.randrange(1, w - 1), rng.randrange(1, h - 1)
        if grid[y][x] == '.':
            grid[y][x] = 'T'
    for x in range(30, 36):
        for y in range(3, 8):
            grid[y][x] = 'T'
    return keep_largest_component(grid)


def write_map(name, grid):
    h, w = len(grid), len(grid[0])
    text = f"type octile\nheight {h}\nwidth {w}\nmap\n" + "".join("".join(r) + "\n" for r in grid)
    (HERE / f"{name}.map").write_text(text)


def write_scen(name, grid, entries, rng):
    free = [(x, y) for y, row in enumerate(grid) for x, c in enumerate(row) if c == '.']
    entries = min(entries, len(free))
    starts = rng.sample(free, entries)
    goals = rng.sample(free, entries)
    h, w = len(grid), len(grid[0])
    lines = ["version 1"]
    for k, (s, g) in enumerate(zip(starts, goals)):
        d = bfs(grid, s)[g]
        lines.append(f"{d // 4}\t{name}.map\t{w}\t{h}\t{s[0]}\t{s[1]}\t{g[0]}\t{g[1]}\t{d:.8f}")
    (HERE / f"{name}.scen").write_text("\n".join(lines) + "\n")


def main():
    rng = random.Random(20240601)
    maps = {
        "random-32-32-20": random_map(32, 32, 20, rng),
        "random-64-64-20": random_map(64, 64, 20, rng),
        "maze-32-32-2": maze_map(32, 32, 2, rng),
        "empty-48-48": [['.'] * 48 for _ in range(48)],
        "den312d-excerpt": den_excerpt(rng),
    }
    for name, grid in maps.items():
        write_map(name, grid)
        write_scen(name, grid, 256, rng)


if __name__ == "__main__":
    main()

"""Min-cost flow by successive shortest paths.

Each phase runs Dijkstra on reduced costs, updates the node potentials, and
then pushes a blocking flow through the arcs of zero reduced cost, so every
unit travels along a currently shortest augmenting path. Costs must be
integers and nonnegative on the initial network.
"""

from __future__ import annotations

import heapq

INF = float("inf")


class MinCostFlow:
    def __init__(self, n_nodes: int):
        self.n = n_nodes
        self.adj: list[list[int]] = [[] for _ in range(n_nodes)]
        self.to: list[int] = []
        self.cap: list[int] = []
        self.cost: list[int] = []

    def add_edge(self, u: int, v: int, cap: int, cost: int) -> int:
        if cost < 0:
            raise ValueError("initial arc costs must be nonnegative")
        e = len(self.to)
        self.to += [v, u]
        self.cap += [cap, 0]
        self.cost += [cost, -cost]
        self.adj[u].append(e)
        self.adj[v].append(e + 1)
        return e

    def flow_on(self, e: int) -> int:
        return self.cap[e ^ 1]

    def solve(self, s: int, t: int, max_flow: int) -> tuple[int, int]:
        """Send up to ``max_flow`` units from ``s`` to ``t`` at minimum cost.

        Returns ``(flow, cost)``.
        """
        n, adj, to, cap, cost = self.n, self.adj, self.to, self.cap, self.cost
        pot = [0] * n
        flow = 0
        total_cost = 0
        while flow < max_flow:
            dist = self._dijkstra(s, t, pot)
            D = dist[t]
            if D == INF:
                break
            for v in range(n):
                dv = dist[v]
                pot[v] += dv if dv < D else D
            pushed = self._blocking_flow(s, t, pot, max_flow - flow)
            if pushed == 0:  # pragma: no cover - guarded by the potential update
                raise RuntimeError("no admissible augmenting path after potential update")
            flow += pushed
        for e in range(0, len(to), 2):
            total_cost += cost[e] * cap[e + 1]
        return flow, total_cost

    def _dijkstra(self, s, t, pot):
        adj, to, cap, cost = self.adj, self.to, self.cap, self.cost
        dist = [INF] * self.n
        dist[s] = 0
        heap = [(0, s)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            if u == t:
                # nodes not yet settled are at least d away; min(dist, D) is all we need
                break
            pu = pot[u]
            for e in adj[u]:
                if cap[e] > 0:
                    v = to[e]
                    nd = d + cost[e] + pu - pot[v]
                    if nd < dist[v]:
                        dist[v] = nd
                        heapq.heappush(heap, (nd, v))
        return dist

    def _blocking_flow(self, s, t, pot, limit):
        adj, to, cap, cost = self.adj, self.to, self.cap, self.cost
        pushed_total = 0
        while pushed_total < limit:
            # BFS levels over admissible arcs (residual, zero reduced cost)
            level = [-1] * self.n
            level[s] = 0
            queue = [s]
            for u in queue:
                pu = pot[u]
                for e in adj[u]:
                    v = to[e]
                    if cap[e] > 0 and level[v] < 0 and cost[e] + pu - pot[v] == 0:
                        level[v] = level[u] + 1
                        queue.append(v)
            if level[t] < 0:
                break
            it = [0] * self.n
            path: list[int] = []
            u = s
            while True:
                if u == t:
                    f = min(cap[e] for e in path)
                    f = min(f, limit - pushed_total)
                    for e in path:
                        cap[e] -= f
                        cap[e ^ 1] += f
                    pushed_total += f
                    if pushed_total >= limit:
                        return pushed_total
                    path = []
                    u = s
                    continue
                edges = adj[u]
                advanced = False
                while it[u] < len(edges):
                    e = edges[it[u]]
                    v = to[e]
                    if cap[e] > 0 and level[v] == level[u] + 1 and cost[e] + pot[u] - pot[v] == 0:
                        path.append(e)
                        u = v
                        advanced = True
                        break
                    it[u] += 1
                if advanced:
                    continue
                if u == s:
                    break
                level[u] = -1
                e = path.pop()
                u = to[e ^ 1]
                it[u] += 1
        return pushed_total

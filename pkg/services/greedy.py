"""
Greedy geographic forwarding, the positional comparison baseline.
"""

from typing import Mapping, Optional

from services.geo_mobility import Position


def greedy_baseline_forward(node_id: int, node_position: Position, dest: int,
                            dest_position: Position,
                            neighbors: Mapping[int, Position]) -> Optional[int]:
    """
    Neighbour closest to the destination and strictly closer than this node.

    The destination itself wins when it is a neighbour; equal distances go to
    the lower node id. None means a local maximum and the packet is dropped.
    """
    if dest in neighbors:
        return dest
    best: Optional[int] = None
    best_distance = node_position.distance_to(dest_position)
    for neighbor_id in sorted(neighbors):
        if neighbor_id == node_id:
            continue
        distance = neighbors[neighbor_id].distance_to(dest_position)
        if distance < best_distance:
            best, best_distance = neighbor_id, distance
    return best

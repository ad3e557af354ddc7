"""
Overlay network planning for hybrid deployments.

A deployment spans several cloud sites. Each site with private networking
gets a local subnet whose gateway is either the Central Point (the
front-end, or a backup CP) or a dedicated vRouter VM. vRouters and
stand-alone nodes dial a VPN tunnel to every Central Point; only the tunnel
to the first live CP carries traffic. Everything here is a pure function over
immutable values.
"""

import ipaddress
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

from config.settings import DEFAULT_BASE_PREFIX
from src.domain.errors import (
    DuplicateSubject,
    EmptyPlacement,
    NoBackupCentralPoint,
    NoPublicIpAvailable,
    OverlayError,
    PrefixExhausted,
    UnassignedAddresses,
    Unreachable,
)
from src.domain.models import (
    FRONT_END_NODE,
    CipherProfile,
    CloudSite,
    Scenario,
    backup_cp_name,
    node_sort_key,
    vrouter_name,
    worker_name,
)

logger = logging.getLogger("hybrid_cluster.overlay")

DIRECT = "direct"
DEFAULT_ROUTE = "default"
SUBNET_PREFIXLEN = 24
MAX_PATH_NODES = 5


@dataclass(frozen=True)
class SubnetAssignment:
    site_id: str
    prefix: str
    gateway_address: str
    dhcp_range: Tuple[str, str]


@dataclass(frozen=True)
class ClientCredential:
    subject: str
    node_id: str
    issued_by: str
    registered: bool = True
    static_subnet: Optional[str] = None
    static_address: Optional[str] = None


@dataclass(frozen=True)
class Tunnel:
    client_node: str
    server_node: str
    active: bool
    credential: Optional[str] = None
    interlink: bool = False
    client_tunnel_address: Optional[str] = None
    server_tunnel_address: Optional[str] = None

    @property
    def ref(self) -> str:
        return f"tunnel:{self.client_node}>{self.server_node}"


@dataclass(frozen=True)
class RouteEntry:
    owner_node: str
    destination: str
    next_hop: str


@dataclass(frozen=True)
class OverlayTopology:
    front_end_node: str
    front_end_site: str
    central_points: Tuple[str, ...]
    vrouters: Dict[str, str]
    stand_alone_clients: FrozenSet[str]
    members: Dict[str, Tuple[str, ...]]
    gateways: Dict[str, str]
    tunnels: Tuple[Tunnel, ...]
    credentials: Dict[str, ClientCredential]
    cipher: CipherProfile = CipherProfile()
    local_subnets: Dict[str, SubnetAssignment] = field(default_factory=dict)
    addresses: Dict[str, str] = field(default_factory=dict)
    base_prefix: Optional[str] = None
    failed: FrozenSet[str] = frozenset()

    @property
    def primary(self) -> str:
        return self.central_points[0]

    @property
    def node_sites(self) -> Dict[str, str]:
        return {node: site for site, nodes in self.members.items() for node in nodes}

    @property
    def public_ip_nodes(self) -> Tuple[str, ...]:
        """Central Points are the only nodes holding a public IP"""
        return self.central_points

    def all_nodes(self) -> List[str]:
        return sorted(self.node_sites, key=node_sort_key)

    def active_tunnels(self, include_interlinks: bool = False) -> List[Tunnel]:
        """Active client tunnels; CP-to-CP interlinks only on request"""
        return [t for t in self.tunnels if t.active and (include_interlinks or not t.interlink)]


def plan_topology(
    sites: Sequence[CloudSite],
    placement: Mapping[str, Sequence[str]],
    front_end_site: str,
    backup_cp_sites: Sequence[str] = (),
    front_end_node: str = FRONT_END_NODE,
    cipher: Optional[CipherProfile] = None,
) -> OverlayTopology:
    """Place CPs and vRouters, classify stand-alone nodes and plan tunnels"""
    site_map = {site.site_id: site for site in sites}
    if not any(placement.values()):
        raise EmptyPlacement("placement holds no nodes")
    if front_end_node not in placement.get(front_end_site, ()):
        raise EmptyPlacement(f"placement has no front-end node at '{front_end_site}'")

    public_ips_used: Dict[str, int] = {front_end_site: 1}
    if site_map[front_end_site].max_public_ips < 1:
        raise NoPublicIpAvailable(f"no public IP at front-end site '{front_end_site}'")

    members: Dict[str, List[str]] = {
        site_id: sorted(nodes, key=node_sort_key) for site_id, nodes in placement.items() if nodes
    }
    central_points = [front_end_node]
    backup_sites = set()
    for site_id in backup_cp_sites:
        used = public_ips_used.get(site_id, 0)
        if used >= site_map[site_id].max_public_ips:
            raise NoPublicIpAvailable(f"no public IP left for a central point at '{site_id}'")
        public_ips_used[site_id] = used + 1
        cp = backup_cp_name(site_id)
        central_points.append(cp)
        members.setdefault(site_id, []).append(cp)
        backup_sites.add(site_id)

    vrouters: Dict[str, str] = {}
    gateways: Dict[str, str] = {}
    stand_alone = set()
    for site_id in sorted(members):
        site = site_map[site_id]
        nodes = members[site_id]
        if not site.supports_private_networks:
            stand_alone.update(n for n in nodes if n not in central_points)
            continue
        if site_id == front_end_site:
            gateways[site_id] = front_end_node
        elif site_id in backup_sites:
            gateways[site_id] = backup_cp_name(site_id)
        else:
            router = vrouter_name(site_id)
            vrouters[site_id] = router
            gateways[site_id] = router
            nodes.append(router)

    primary = central_points[0]
    tunnels: List[Tunnel] = []
    credentials: Dict[str, ClientCredential] = {}

    def _credential(node: str) -> str:
        subject = f"/CN={node}"
        credentials[subject] = ClientCredential(subject=subject, node_id=node, issued_by=primary)
        return subject

    for router in sorted(vrouters.values()) + sorted(stand_alone, key=node_sort_key):
        subject = _credential(router)
        for cp in central_points:
            tunnels.append(Tunnel(router, cp, active=(cp == primary), credential=subject))
    # backup CPs stay attached to every CP ahead of them in failover order
    for index, cp in enumerate(central_points[1:], start=1):
        subject = _credential(cp)
        for upstream in central_points[:index]:
            tunnels.append(Tunnel(cp, upstream, active=(upstream == primary), credential=subject, interlink=True))

    topology = OverlayTopology(
        front_end_node=front_end_node,
        front_end_site=front_end_site,
        central_points=tuple(central_points),
        vrouters=vrouters,
        stand_alone_clients=frozenset(stand_alone),
        members={site_id: tuple(sorted(nodes, key=node_sort_key)) for site_id, nodes in members.items()},
        gateways=gateways,
        tunnels=tuple(tunnels),
        credentials=credentials,
        cipher=cipher or CipherProfile(),
    )
    logger.debug(
        f"Planned overlay: CPs={list(central_points)} vrouters={sorted(vrouters.values())} "
        f"stand-alone={sorted(stand_alone)}"
    )
    return topology


def _block(base: ipaddress.IPv4Network, index: int) -> ipaddress.IPv4Network:
    start = int(base.network_address) + index * (1 << (32 - SUBNET_PREFIXLEN))
    return ipaddress.ip_network((start, SUBNET_PREFIXLEN))


def assign_addresses(
    topology: OverlayTopology,
    base_prefix: str = DEFAULT_BASE_PREFIX,
    manual_subnets: Optional[Mapping[str, str]] = None,
) -> OverlayTopology:
    """
    Deterministic addressing: the front-end site first, then the other gateway
    sites by site_id, take consecutive /24 blocks of the base prefix. The
    third-from-last block is the stand-alone pool, the second-from-last holds
    the /30 tunnel endpoint pairs.
    """
    base = ipaddress.ip_network(base_prefix)
    manual = {site: ipaddress.ip_network(prefix) for site, prefix in (manual_subnets or {}).items()}
    block_count = 1 << (SUBNET_PREFIXLEN - base.prefixlen) if base.prefixlen <= SUBNET_PREFIXLEN else 0

    ordered_sites = [s for s in [topology.front_end_site] if s in topology.gateways]
    ordered_sites += sorted(s for s in topology.gateways if s != topology.front_end_site)
    automatic = [s for s in ordered_sites if s not in manual]
    if block_count < 3 or len(automatic) > block_count - 3:
        raise PrefixExhausted(f"{base} cannot hold {len(ordered_sites)} site subnets plus reserved blocks")

    standalone_pool = _block(base, block_count - 3)
    tunnel_pool = _block(base, block_count - 2)

    prefixes: Dict[str, ipaddress.IPv4Network] = {}
    next_index = 0
    for site_id in ordered_sites:
        if site_id in manual:
            prefixes[site_id] = manual[site_id]
            continue
        while True:
            if next_index >= block_count - 3:
                raise PrefixExhausted(f"{base} has no free block left for '{site_id}'")
            candidate = _block(base, next_index)
            next_index += 1
            if not any(candidate.overlaps(m) for m in manual.values()):
                prefixes[site_id] = candidate
                break

    subnets: Dict[str, SubnetAssignment] = {}
    addresses: Dict[str, str] = {}
    for site_id, prefix in prefixes.items():
        gateway = prefix.network_address + 1
        dhcp_first = prefix.network_address + 10
        dhcp_last = prefix.broadcast_address - 1
        subnets[site_id] = SubnetAssignment(site_id, str(prefix), str(gateway), (str(dhcp_first), str(dhcp_last)))
        gateway_node = topology.gateways[site_id]
        addresses[gateway_node] = str(gateway)
        hosts = [n for n in topology.members[site_id]
                 if n != gateway_node and n not in topology.stand_alone_clients]
        for offset, node in enumerate(hosts):
            address = dhcp_first + offset
            if address > dhcp_last:
                raise PrefixExhausted(f"subnet {prefix} of '{site_id}' is full")
            addresses[node] = str(address)

    for offset, node in enumerate(sorted(topology.stand_alone_clients, key=node_sort_key)):
        if offset + 1 >= standalone_pool.num_addresses - 1:
            raise PrefixExhausted("stand-alone pool exhausted")
        addresses[node] = str(standalone_pool.network_address + 1 + offset)
    # CPs outside any private network still need an overlay address
    for offset, cp in enumerate(topology.central_points):
        if cp not in addresses:
            addresses[cp] = str(standalone_pool.broadcast_address - 1 - offset)

    tunnels = []
    for index, tunnel in enumerate(topology.tunnels):
        if 4 * index + 3 > tunnel_pool.num_addresses - 1:
            raise PrefixExhausted("tunnel endpoint pool exhausted")
        pair_base = tunnel_pool.network_address + 4 * index
        tunnels.append(replace(
            tunnel,
            server_tunnel_address=str(pair_base + 1),
            client_tunnel_address=str(pair_base + 2),
        ))

    site_of = topology.node_sites
    credentials = {}
    for subject, credential in topology.credentials.items():
        credentials[subject] = _static_config(topology, credential, site_of, subnets, addresses)

    return replace(
        topology,
        local_subnets=subnets,
        addresses=addresses,
        tunnels=tuple(tunnels),
        credentials=credentials,
        base_prefix=str(base),
    )


def _static_config(topology, credential, site_of, subnets, addresses) -> ClientCredential:
    node = credential.node_id
    if node in topology.vrouters.values() and site_of.get(node) in subnets:
        return replace(credential, static_subnet=subnets[site_of[node]].prefix)
    if node in topology.stand_alone_clients:
        return replace(credential, static_address=addresses.get(node))
    return credential


def compute_routes(topology: OverlayTopology) -> Dict[str, List[RouteEntry]]:
    """Per-node route tables for the current (possibly failed-over) topology"""
    if topology.base_prefix is None:
        raise UnassignedAddresses("assign_addresses has not been run on this topology")

    routes: Dict[str, List[RouteEntry]] = {}
    active = topology.active_tunnels(include_interlinks=True)
    client_tunnel = {t.client_node: t for t in active}
    site_of = topology.node_sites

    for site_id, gateway in topology.gateways.items():
        if gateway in topology.failed:
            continue
        subnet = topology.local_subnets[site_id]
        for node in topology.members[site_id]:
            if node in topology.stand_alone_clients or node in topology.failed:
                continue
            table = routes.setdefault(node, [])
            table.append(RouteEntry(node, subnet.prefix, DIRECT))
            if node != gateway:
                table.append(RouteEntry(node, DEFAULT_ROUTE, subnet.gateway_address))

    for router in topology.vrouters.values():
        if router in client_tunnel:
            routes.setdefault(router, []).append(
                RouteEntry(router, DEFAULT_ROUTE, client_tunnel[router].ref))

    for cp in topology.central_points:
        table = routes.setdefault(cp, [])
        if cp in client_tunnel:
            table.append(RouteEntry(cp, DEFAULT_ROUTE, client_tunnel[cp].ref))
        for tunnel in active:
            if tunnel.server_node != cp:
                continue
            client = tunnel.client_node
            client_site = site_of.get(client)
            if topology.gateways.get(client_site) == client:
                table.append(RouteEntry(cp, topology.local_subnets[client_site].prefix, tunnel.ref))
            elif client in topology.stand_alone_clients or client in topology.central_points:
                table.append(RouteEntry(cp, f"{topology.addresses[client]}/32", tunnel.ref))

    for client in sorted(topology.stand_alone_clients, key=node_sort_key):
        if client in client_tunnel:
            routes[client] = [RouteEntry(client, topology.base_prefix, client_tunnel[client].ref)]

    for table in routes.values():
        table.sort(key=lambda r: (r.destination == DEFAULT_ROUTE, r.destination))
    return routes


def _lookup(table: Sequence[RouteEntry], address: ipaddress.IPv4Address) -> Optional[RouteEntry]:
    """Longest-prefix match, the default route matching as /0"""
    best, best_len = None, -1
    for entry in table:
        if entry.destination == DEFAULT_ROUTE:
            length = 0
        else:
            network = ipaddress.ip_network(entry.destination)
            if address not in network:
                continue
            length = network.prefixlen
        if length > best_len:
            best, best_len = entry, length
    return best


def trace_path(
    routes: Mapping[str, Sequence[RouteEntry]],
    topology: OverlayTopology,
    src: str,
    dst: str,
) -> List[str]:
    """Follow route tables hop by hop from src to dst"""
    if src == dst:
        return [src]
    if dst not in topology.addresses or src not in topology.addresses:
        raise UnassignedAddresses(f"no overlay address for '{src}' or '{dst}'")

    owner_of = {address: node for node, address in topology.addresses.items()}
    target = ipaddress.ip_address(topology.addresses[dst])
    path = [src]
    current = src
    while current != dst:
        if len(path) >= MAX_PATH_NODES:
            raise Unreachable(f"{src} -> {dst} exceeds {MAX_PATH_NODES} nodes: {path}")
        entry = _lookup(routes.get(current, ()), target)
        if entry is None:
            raise Unreachable(f"{current} has no route toward {dst}")
        if entry.next_hop == DIRECT:
            nxt = dst
        elif entry.next_hop.startswith("tunnel:"):
            client, _, server = entry.next_hop[len("tunnel:"):].partition(">")
            nxt = server if current == client else client
        else:
            nxt = owner_of.get(entry.next_hop)
        if nxt is None or nxt in topology.failed or nxt in path:
            raise Unreachable(f"{src} -> {dst} broken at {current}")
        path.append(nxt)
        current = nxt
    return path


def fail_central_point(topology: OverlayTopology, failed: str) -> OverlayTopology:
    """Drop a CP and move its clients' traffic to the next CP in order"""
    if failed not in topology.central_points:
        raise OverlayError(f"'{failed}' is not a central point")
    remaining = tuple(cp for cp in topology.central_points if cp != failed)
    if not remaining:
        raise NoBackupCentralPoint(f"'{failed}' was the last central point")

    moved = {t.client_node for t in topology.tunnels if t.active and t.server_node == failed}
    new_primary = remaining[0]
    tunnels = []
    for tunnel in topology.tunnels:
        if failed in (tunnel.client_node, tunnel.server_node):
            tunnels.append(replace(tunnel, active=False))
        elif tunnel.client_node in moved and tunnel.server_node == new_primary:
            tunnels.append(replace(tunnel, active=True))
        else:
            tunnels.append(tunnel)
    logger.info(f"Central point {failed} failed; {len(moved)} clients now use {new_primary}")
    return replace(
        topology,
        central_points=remaining,
        tunnels=tuple(tunnels),
        failed=topology.failed | {failed},
    )


def register_client(topology: OverlayTopology, node_id: str, subject: str) -> ClientCredential:
    """Issue a credential signed by the primary CP for a client identity"""
    if subject in topology.credentials:
        raise DuplicateSubject(f"subject '{subject}' is already registered")
    credential = ClientCredential(subject=subject, node_id=node_id, issued_by=topology.primary)
    return _static_config(topology, credential, topology.node_sites, topology.local_subnets, topology.addresses)


def with_credential(topology: OverlayTopology, credential: ClientCredential) -> OverlayTopology:
    if credential.subject in topology.credentials:
        raise DuplicateSubject(f"subject '{credential.subject}' is already registered")
    return replace(topology, credentials={**topology.credentials, credential.subject: credential})


def apply_cipher_profile(profile: CipherProfile, payload_seconds: float, hops: int) -> float:
    """Transfer time once tunnel encryption throughput and per-hop latency are applied"""
    return payload_seconds / profile.throughput_factor + hops * profile.latency_penalty


def topology_to_dict(topology: OverlayTopology, routes: Optional[Mapping[str, Sequence[RouteEntry]]] = None) -> dict:
    """Stable-ordered JSON form"""
    if routes is None and topology.base_prefix is not None:
        routes = compute_routes(topology)
    return {
        "central_points": list(topology.central_points),
        "vrouters": {site: topology.vrouters[site] for site in sorted(topology.vrouters)},
        "stand_alone_clients": sorted(topology.stand_alone_clients, key=node_sort_key),
        "subnets": {
            site: {
                "prefix": s.prefix,
                "gateway_address": s.gateway_address,
                "dhcp_range": list(s.dhcp_range),
            }
            for site, s in sorted(topology.local_subnets.items())
        },
        "tunnels": [
            {
                "client": t.client_node,
                "server": t.server_node,
                "active": t.active,
                "interlink": t.interlink,
                "client_address": t.client_tunnel_address,
                "server_address": t.server_tunnel_address,
                "credential": t.credential,
            }
            for t in topology.tunnels
        ],
        "routes": {
            node: [{"destination": r.destination, "next_hop": r.next_hop} for r in (routes or {})[node]]
            for node in sorted(routes or {}, key=node_sort_key)
        },
    }


def plan_initial_topology(scenario: Scenario) -> Tuple[OverlayTopology, Dict[str, List[RouteEntry]]]:
    """Addressed topology and routes for the scenario's initial deployment"""
    template = scenario.template
    placement: Dict[str, List[str]] = {template.front_end_site: [FRONT_END_NODE]}
    index = 1
    for site_id, count in template.initial_workers:
        for _ in range(count):
            placement.setdefault(site_id, []).append(worker_name(index))
            index += 1
    topology = plan_topology(
        scenario.sites,
        placement,
        template.front_end_site,
        scenario.overlay.backup_cp_sites,
        cipher=scenario.overlay.cipher,
    )
    topology = assign_addresses(topology, scenario.overlay.base_prefix, scenario.overlay.manual_subnets)
    return topology, compute_routes(topology)

"""Inter-controller control channel.

Three concerns live here:

* the discovery frame codec: an LLDP-style announcement with a custom TLV
  carrying controller contact information, always exactly 60 bytes;
* neighbor discovery and the keep-alive failure detector (500 ms probes,
  a peer is declared down on the third consecutive miss);
* a wildcard-topic publish/subscribe bus federated across paired
  controllers, relaying by dedup flooding restricted to links whose far
  side advertised matching interest.

Control frames ride the peering links themselves, so a data-plane cut also
severs the control channel that crossed it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

from .model import LinkSpec, canonical_json
from .sim import Simulation

FRAME_LEN = 60
OPENFLOW_OUI = b"\x00\x26\xe1"
MESSENGER_SUBTYPE = 0x17
CONTROLLER_ID_LEN = 8
SERVER_NAME_LEN = 14

DISCOVERY_PERIOD_MS = 1000.0
KEEPALIVE_PERIOD_MS = 500.0
KEEPALIVE_MISS_LIMIT = 3

GATE_OPEN = "open"
GATE_CLOSED = "closed"
GATE_LIMITED = "limited"

# topic families the adaptive policy may offload away from weak links;
# everything else (direct reservation traffic, general announcements) always
# passes
OFFLOADABLE = ("monitoring", "connectivity", "reachability")


class FrameEncodeError(ValueError):
    pass


class FrameDecodeError(ValueError):
    def __init__(self, offset: int, reason: str):
        self.offset = offset
        self.reason = reason
        super().__init__(f"byte {offset}: {reason}")


@dataclass(frozen=True)
class MlldpFrame:
    """Decoded discovery announcement: who runs the far side of a border link."""

    controller_id: str
    switch_id: int
    switch_port: int
    server_ip: str
    server_port: int
    server_name: str


def _pack_str(value: str, width: int, what: str) -> bytes:
    try:
        raw = value.encode("ascii")
    except UnicodeEncodeError as exc:
        raise FrameEncodeError(f"{what} must be ASCII: {value!r}") from exc
    if b"\x00" in raw:
        raise FrameEncodeError(f"{what} may not contain NUL bytes")
    if len(raw) > width:
        raise FrameEncodeError(f"{what} {value!r} exceeds {width} bytes")
    return raw.ljust(width, b"\x00")


def _pack_ip(ip: str) -> bytes:
    parts = ip.split(".")
    if len(parts) != 4 or not all(p.isdigit() and 0 <= int(p) <= 255 for p in parts):
        raise FrameEncodeError(f"bad IPv4 address {ip!r}")
    return bytes(int(p) for p in parts)


def encode_frame(frame: MlldpFrame) -> bytes:
    """Encode a discovery announcement into its fixed 60-byte layout.

    Layout (fixed field widths chosen to land exactly on 60 bytes):

    ====== ======================================================
    0      chassis TLV (type 1, subtype 7, 1-byte value)
    4      port TLV (type 2, subtype 7, 1-byte value)
    8      TTL TLV (type 3, 120 seconds)
    12     custom TLV header (type 127, 44-byte value)
    14     OUI ``00 26 E1``
    17     subtype ``0x17``
    18     tag 0x02 + controller id, 8 bytes NUL-padded
    27     tag 0x03 + switch id, uint32
    32     tag 0x04 + switch port, uint16
    35     tag 0x05 + server IPv4, 4 bytes
    40     tag 0x06 + server port, uint16
    43     tag 0x08 + server name, 14 bytes NUL-padded
    58     end-of-LLDPDU TLV
    ====== ======================================================
    """
    if not frame.controller_id:
        raise FrameEncodeError("controller id must be non-empty")
    if not 0 <= frame.switch_id < 2**32:
        raise FrameEncodeError(f"switch id {frame.switch_id} out of range")
    if not 0 <= frame.switch_port < 2**16:
        raise FrameEncodeError(f"switch port {frame.switch_port} out of range")
    if not 0 <= frame.server_port < 2**16:
        raise FrameEncodeError(f"server port {frame.server_port} out of range")

    out = bytearray()
    out += struct.pack("!H", (1 << 9) | 2) + bytes([7, frame.switch_id & 0xFF])
    out += struct.pack("!H", (2 << 9) | 2) + bytes([7, frame.switch_port & 0xFF])
    out += struct.pack("!H", (3 << 9) | 2) + struct.pack("!H", 120)
    out += struct.pack("!H", (127 << 9) | 44)
    out += OPENFLOW_OUI
    out += bytes([MESSENGER_SUBTYPE])
    out += bytes([0x02]) + _pack_str(frame.controller_id, CONTROLLER_ID_LEN, "controller id")
    out += bytes([0x03]) + struct.pack("!I", frame.switch_id)
    out += bytes([0x04]) + struct.pack("!H", frame.switch_port)
    out += bytes([0x05]) + _pack_ip(frame.server_ip)
    out += bytes([0x06]) + struct.pack("!H", frame.server_port)
    out += bytes([0x08]) + _pack_str(frame.server_name, SERVER_NAME_LEN, "server name")
    out += b"\x00\x00"
    assert len(out) == FRAME_LEN
    return bytes(out)


def _expect_tag(data: bytes, pos: int, tag: int) -> int:
    if data[pos] != tag:
        raise FrameDecodeError(pos, f"expected field tag 0x{tag:02x}, got 0x{data[pos]:02x}")
    return pos + 1


def decode_frame(data: bytes) -> MlldpFrame:
    """Parse a discovery frame, rejecting anything that is not one of ours."""
    if len(data) != FRAME_LEN:
        raise FrameDecodeError(len(data), f"frame is {len(data)} bytes, expected {FRAME_LEN}")

    pos = 0
    custom_pos = None
    while pos + 2 <= FRAME_LEN:
        typelen = struct.unpack_from("!H", data, pos)[0]
        tlv_type = typelen >> 9
        tlv_len = typelen & 0x1FF
        if tlv_type == 0:
            break
        if pos + 2 + tlv_len > FRAME_LEN:
            raise FrameDecodeError(pos, f"TLV of type {tlv_type} overruns the frame")
        if tlv_type == 127:
            custom_pos = pos
        pos += 2 + tlv_len
    if custom_pos is None:
        raise FrameDecodeError(pos, "no custom TLV (type 127) present")

    pos = custom_pos
    tlv_len = struct.unpack_from("!H", data, pos)[0] & 0x1FF
    if tlv_len != 44:
        raise FrameDecodeError(pos, f"custom TLV length {tlv_len}, expected 44")
    pos += 2
    if data[pos : pos + 3] != OPENFLOW_OUI:
        raise FrameDecodeError(pos, f"OUI {data[pos:pos + 3].hex()} is not the OpenFlow OUI")
    pos += 3
    if data[pos] != MESSENGER_SUBTYPE:
        raise FrameDecodeError(pos, f"subtype 0x{data[pos]:02x}, expected 0x{MESSENGER_SUBTYPE:02x}")
    pos += 1

    pos = _expect_tag(data, pos, 0x02)
    raw_id = data[pos : pos + CONTROLLER_ID_LEN].rstrip(b"\x00")
    if not raw_id:
        raise FrameDecodeError(pos, "empty controller id")
    controller_id = raw_id.decode("ascii", errors="strict")
    pos += CONTROLLER_ID_LEN

    pos = _expect_tag(data, pos, 0x03)
    switch_id = struct.unpack_from("!I", data, pos)[0]
    pos += 4
    pos = _expect_tag(data, pos, 0x04)
    switch_port = struct.unpack_from("!H", data, pos)[0]
    pos += 2
    pos = _expect_tag(data, pos, 0x05)
    server_ip = ".".join(str(b) for b in data[pos : pos + 4])
    pos += 4
    pos = _expect_tag(data, pos, 0x06)
    server_port = struct.unpack_from("!H", data, pos)[0]
    pos += 2
    pos = _expect_tag(data, pos, 0x08)
    server_name = data[pos : pos + SERVER_NAME_LEN].rstrip(b"\x00").decode("ascii")

    return MlldpFrame(controller_id, switch_id, switch_port, server_ip, server_port, server_name)


# ---------------------------------------------------------------------------
# topics

class TopicError(ValueError):
    pass


def split_topic(topic: str) -> list[str]:
    segments = topic.split(".")
    if len(segments) != 3 or any(not s for s in segments):
        raise TopicError(f"topic {topic!r} must have exactly 3 non-empty segments")
    return segments


def check_publication_topic(topic: str) -> str:
    if "*" in split_topic(topic):
        raise TopicError(f"publication topic {topic!r} may not contain wildcards")
    return topic


def check_pattern(pattern: str) -> str:
    split_topic(pattern)
    return pattern


def topic_matches(pattern: str, topic: str) -> bool:
    """Per-segment match: each pattern segment is a literal or ``*``."""
    p = pattern.split(".")
    t = topic.split(".")
    return len(p) == len(t) == 3 and all(ps == "*" or ps == ts for ps, ts in zip(p, t))


def topic_category(topic: str) -> str:
    """Control-traffic accounting category for a topic."""
    first, second, _ = topic.split(".", 2)
    if first in ("monitoring", "connectivity", "reachability"):
        return first
    if second == "reserve":
        return "reservation"
    return "bus"


@dataclass(frozen=True)
class BusMessage:
    origin: str
    seq: int
    topic: str
    payload: dict
    sent_at: float

    def serialized(self) -> str:
        return canonical_json(
            {"origin": self.origin, "payload": self.payload, "seq": self.seq, "topic": self.topic}
        )

    def nbytes(self) -> int:
        return len(self.serialized())


# ---------------------------------------------------------------------------
# federation

@dataclass
class PeerState:
    """Everything tracked about one paired neighbor controller."""

    domain: str
    link: LinkSpec
    up: bool = False
    patterns: set[str] = field(default_factory=set)
    outstanding_ping: Optional[float] = None
    misses: int = 0
    advertised: frozenset = frozenset()


class Messenger:
    """One controller's end of the federation."""

    def __init__(self, sim: Simulation, controller, domain: str,
                 server_ip: str, server_port: int, server_name: str):
        self.sim = sim
        self.controller = controller
        self.domain = domain
        self.server_ip = server_ip
        self.server_port = server_port
        self.server_name = server_name
        self.border: dict[str, LinkSpec] = {}   # my endpoint str -> peering link
        self.subscriptions: list[tuple[str, Callable[[BusMessage], None]]] = []
        self.peers: dict[str, PeerState] = {}
        self._seq = 0
        self._seen: set[tuple[str, int]] = set()
        self.gates: dict[str, dict[str, str]] = {}
        self.left = False

    # -- wiring ----------------------------------------------------------------

    def add_border_port(self, link: LinkSpec) -> None:
        self.border[str(link.endpoint_in(self.domain))] = link

    def boot(self) -> None:
        self.sim.schedule(self.sim.now, self._discovery_tick)
        first = self._next_grid(KEEPALIVE_PERIOD_MS)
        self.sim.schedule(first, self._keepalive_tick)

    def _next_grid(self, period: float) -> float:
        now = self.sim.now
        ticks = int(now // period) + 1
        return ticks * period

    @property
    def alive(self) -> bool:
        return self.controller.alive and not self.left

    def up_peers(self) -> list[PeerState]:
        return sorted((p for p in self.peers.values() if p.up), key=lambda p: p.domain)

    def peer_is_up(self, domain: str) -> bool:
        peer = self.peers.get(domain)
        return peer is not None and peer.up

    # -- subscriptions --------------------------------------------------------

    def subscribe(self, pattern: str, handler: Callable[[BusMessage], None]) -> None:
        check_pattern(pattern)
        self.subscriptions.append((pattern, handler))
        self._advertise_interest()

    def unsubscribe(self, pattern: str) -> None:
        before = len(self.subscriptions)
        self.subscriptions = [(p, h) for p, h in self.subscriptions if p != pattern]
        if len(self.subscriptions) != before:
            self._advertise_interest()

    def local_patterns(self) -> set[str]:
        return {p for p, _ in self.subscriptions}

    def _interest_for(self, peer_domain: str) -> frozenset:
        """Patterns we relay for: ours plus everything learned beyond us.

        Split horizon: what a peer told us is never advertised back to it.
        """
        interest = set(self.local_patterns())
        for other in self.peers.values():
            if other.domain != peer_domain and other.up:
                interest |= other.patterns
        return frozenset(interest)

    def _advertise_interest(self) -> None:
        if not self.alive:
            return
        for peer in self.up_peers():
            current = self._interest_for(peer.domain)
            if current != peer.advertised:
                peer.advertised = current
                self._transmit_control(peer.link, peer.domain, "subs",
                                       {"patterns": sorted(current)})

    # -- discovery ------------------------------------------------------------

    def _discovery_tick(self) -> None:
        if self.alive:
            for ep_str in sorted(self.border):
                link = self.border[ep_str]
                if any(p.link.link_id == link.link_id and p.up for p in self.peers.values()):
                    continue
                self._announce(link)
        self.sim.schedule(self.sim.now + DISCOVERY_PERIOD_MS, self._discovery_tick)

    def _announce(self, link: LinkSpec) -> None:
        ep = link.endpoint_in(self.domain)
        frame = MlldpFrame(
            controller_id=self.domain,
            switch_id=ep.node.local,
            switch_port=ep.port,
            server_ip=self.server_ip,
            server_port=self.server_port,
            server_name=self.server_name,
        )
        data = encode_frame(frame)
        far = link.other_end(ep)
        self._send_over(link, far.node.domain, FRAME_LEN, f"mlldp.{self.domain}.announce",
                        lambda peer_msgr: peer_msgr.on_frame(link, data))

    def on_frame(self, link: LinkSpec, data: bytes) -> None:
        if not self.alive:
            return
        try:
            frame = decode_frame(data)
        except FrameDecodeError:
            return
        self.pair(frame.controller_id, link)

    # -- pairing ---------------------------------------------------------------

    def pair(self, peer_domain: str, link: LinkSpec) -> None:
        """Create the control channel; the peer goes up once its interest arrives."""
        peer = self.peers.get(peer_domain)
        if peer is not None and peer.up:
            return
        if peer is None:
            self.peers[peer_domain] = PeerState(domain=peer_domain, link=link)
        else:
            peer.link = link
        self._send_subs(self.peers[peer_domain])

    def _send_subs(self, peer: PeerState) -> None:
        peer.advertised = self._interest_for(peer.domain)
        self._transmit_control(peer.link, peer.domain, "subs",
                               {"patterns": sorted(peer.advertised)})

    def unpair(self, peer_domain: str) -> None:
        peer = self.peers.pop(peer_domain, None)
        if peer is not None:
            self._advertise_interest()

    def graceful_leave(self) -> None:
        """Announce departure on the general topic, then sever every channel."""
        self.publish(f"general.leave.{self.domain}", {})
        self.left = True
        for peer_domain in sorted(self.peers):
            self.unpair(peer_domain)

    # -- keep-alive -------------------------------------------------------------

    def _keepalive_tick(self) -> None:
        if self.alive:
            for peer in self.up_peers():
                if peer.outstanding_ping is not None:
                    peer.misses += 1
                    peer.outstanding_ping = None
                    if peer.misses >= KEEPALIVE_MISS_LIMIT:
                        self._peer_down(peer, "keepalive")
                        continue
                peer.outstanding_ping = self.sim.now
                self._transmit_control(peer.link, peer.domain, "ka-ping", {"at": self.sim.now})
        self.sim.schedule(self.sim.now + KEEPALIVE_PERIOD_MS, self._keepalive_tick)

    def _peer_down(self, peer: PeerState, reason: str) -> None:
        self.sim.log("PEER", self.domain, f"down {peer.domain} {reason}")
        link = peer.link
        self.unpair(peer.domain)
        self.controller.on_peer_down(peer.domain, link, reason)

    # -- control-plane transport ---------------------------------------------------

    def _send_over(self, link: LinkSpec, to_domain: str, nbytes: int, label: str,
                   deliver: Callable[["Messenger"], None], category: str = "bus",
                   subject: Optional[str] = None) -> None:
        if not self.sim.network.link_is_up(link.link_id):
            return
        from_domain = self.domain
        subject = subject if subject is not None else from_domain

        def arrive():
            if not self.sim.network.link_is_up(link.link_id):
                return
            target = self.sim.controllers.get(to_domain)
            if target is None or not target.messenger.alive:
                return
            self.sim.log("BUS", subject, f"{label} {nbytes} {from_domain}>{to_domain} {category}")
            deliver(target.messenger)

        self.sim.schedule_in(link.latency_ms, arrive)

    def _transmit_control(self, link: LinkSpec, to_domain: str, kind: str, body: dict) -> None:
        payload = dict(body)
        payload["from"] = self.domain
        nbytes = len(canonical_json({"kind": kind, **payload}))
        label = {"ka-ping": f"ka.{self.domain}.ping",
                 "ka-reply": f"ka.{self.domain}.reply",
                 "subs": f"subs.{self.domain}.sync"}[kind]
        self._send_over(link, to_domain, nbytes, label,
                        lambda peer_msgr: peer_msgr.on_control(kind, payload, link))

    def on_control(self, kind: str, payload: dict, link: LinkSpec) -> None:
        if not self.alive:
            return
        sender = payload["from"]
        if kind == "ka-ping":
            peer = self.peers.get(sender)
            if peer is not None and peer.up:
                self._transmit_control(peer.link, sender, "ka-reply", {"at": payload["at"]})
        elif kind == "ka-reply":
            peer = self.peers.get(sender)
            if peer is not None:
                peer.outstanding_ping = None
                peer.misses = 0
        elif kind == "subs":
            self._on_subs(sender, link, payload)

    def _on_subs(self, sender: str, link: LinkSpec, payload: dict) -> None:
        peer = self.peers.get(sender)
        newly_up = False
        if peer is None:
            # the peer discovered us first; adopt the channel and answer
            peer = PeerState(domain=sender, link=link)
            self.peers[sender] = peer
            self._send_subs(peer)
        if not peer.up:
            peer.up = True
            newly_up = True
        peer.patterns = set(payload["patterns"])
        self._advertise_interest()
        if newly_up:
            self.sim.log("PEER", self.domain, f"up {sender}")
            self.controller.on_peering_up(sender, peer.link)

    # -- publish/subscribe ------------------------------------------------------

    def set_gates(self, link_id: str, modes: dict[str, str]) -> None:
        self.gates[link_id] = dict(modes)

    def _gate_allows(self, link: LinkSpec, msg: BusMessage) -> bool:
        category = topic_category(msg.topic)
        mode = self.gates.get(link.link_id, {}).get(category, GATE_OPEN)
        if mode == GATE_OPEN:
            return True
        if mode == GATE_CLOSED:
            return False
        # limited: a weak link with no alternative route; it carries this
        # controller's own monitoring (rate-limited by the agent's schedule)
        # and event-driven categories, but never third-party monitoring relays
        if category == "monitoring":
            return msg.origin == self.domain
        return True

    def publish(self, topic: str, payload: dict,
                first_hop_links: Optional[set[str]] = None) -> BusMessage:
        check_publication_topic(topic)
        self._seq += 1
        msg = BusMessage(origin=self.domain, seq=self._seq, topic=topic,
                         payload=payload, sent_at=self.sim.now)
        self._seen.add((msg.origin, msg.seq))
        self._deliver_local(msg)
        self._forward(msg, received_from=None, first_hop_links=first_hop_links)
        return msg

    def _deliver_local(self, msg: BusMessage) -> None:
        for pattern, handler in list(self.subscriptions):
            if topic_matches(pattern, msg.topic):
                handler(msg)

    def _forward(self, msg: BusMessage, received_from: Optional[str],
                 first_hop_links: Optional[set[str]] = None) -> None:
        for peer in self.up_peers():
            if peer.domain == msg.origin or peer.domain == received_from:
                continue
            if first_hop_links is not None and peer.link.link_id not in first_hop_links:
                continue
            if not self._gate_allows(peer.link, msg):
                continue
            if not any(topic_matches(p, msg.topic) for p in peer.patterns):
                continue
            self._send_over(peer.link, peer.domain, msg.nbytes(), msg.topic,
                            lambda pm, m=msg, s=self.domain: pm.on_bus_message(m, s),
                            category=topic_category(msg.topic), subject=msg.origin)

    def on_bus_message(self, msg: BusMessage, from_domain: str) -> None:
        if not self.alive:
            return
        sender = self.peers.get(from_domain)
        if sender is None or not sender.up:
            # unpair severed this channel; whatever is still in flight from
            # that side is ignored
            return
        key = (msg.origin, msg.seq)
        if key in self._seen:
            return
        self._seen.add(key)
        if topic_matches("general.leave.*", msg.topic):
            departed = msg.topic.rsplit(".", 1)[1]
            peer = self.peers.get(departed)
            self._forward(msg, received_from=from_domain)
            if peer is not None:
                self.sim.log("PEER", self.domain, f"down {departed} leave")
                self.unpair(departed)
                self.controller.on_peer_down(departed, peer.link, "leave")
            return
        self._deliver_local(msg)
        self._forward(msg, received_from=from_domain)

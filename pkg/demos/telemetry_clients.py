"""Speak to a live engine over both wire protocols at once.

Starts the TCP and HTTP servers on loopback ports, runs the plant at
500x real time in a background thread, subscribes over raw TCP, polls
the HTTP state endpoint, and submits a recharge command. Everything a
dashboard would do, compressed into one script.
"""

import json
import socket
import threading
import urllib.request

from aerogreen.config import SimConfig
from aerogreen.runtime import Engine
from aerogreen.server import start_servers
from aerogreen import wire


def main() -> None:
    cfg = SimConfig(seed=5, time_acceleration=500.0)
    eng = Engine(cfg)
    tcp_srv, http_srv = start_servers(
        eng.broker, tcp="127.0.0.1:0", http="127.0.0.1:0",
        command_timeout=5.0,
    )
    tcp_port = tcp_srv.server_address[1]
    http_port = http_srv.server_address[1]
    print(f"tcp on {tcp_port}, http on {http_port}")

    stop = threading.Event()
    runner = threading.Thread(
        target=eng.run, args=(1800.0,), kwargs={"pace": True, "stop": stop})
    runner.start()

    # raw TCP: subscribe and read the first few temperature frames
    with socket.create_connection(("127.0.0.1", tcp_port)) as sock:
        sock.sendall((wire.encode({"t": "sub", "pattern": "gh/zone0/temp"})
                      + "\n").encode())
        buf = sock.makefile("r")
        for _ in range(3):
            frame = json.loads(buf.readline())
            print(f"tcp frame: {frame['topic']} = {frame['v']} {frame['u']}"
                  f" at t={frame['ts']:.0f}")

    # HTTP: full state snapshot, then a command round trip
    with urllib.request.urlopen(
            f"http://127.0.0.1:{http_port}/api/state") as resp:
        state = {f["topic"]: f for f in json.load(resp)}
    print(f"http state holds {len(state)} topics")
    tank0 = state["gh/tank0/volume"]["v"]

    body = json.dumps({"kind": "recharge_tank",
                       "payload": {"tank": 0, "volume": 25.0}}).encode()
    req = urllib.request.Request(
        f"http://127.0.0.1:{http_port}/api/command", data=body,
        headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req) as resp:
        ack = json.load(resp)
    print(f"recharge ack: {ack}")

    with urllib.request.urlopen(
            f"http://127.0.0.1:{http_port}/api/state") as resp:
        frames = {f["topic"]: f for f in json.load(resp)}
    print(f"tank0 {tank0:.1f} L -> {frames['gh/tank0/volume']['v']:.1f} L")

    stop.set()
    runner.join()
    tcp_srv.shutdown()
    http_srv.shutdown()
    eng.close()
    print("servers down, engine closed")


if __name__ == "__main__":
    main()

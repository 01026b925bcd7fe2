"""
Scrape endpoint for the metrics registry
"""

import logging
import threading
import time
from typing import Callable, Optional, Tuple

from flask import Flask, Response
from werkzeug.serving import make_server

from src.metrics.registry import CONTENT_TYPE, GaugeRegistry
from src.utils.errors import BindError, ConfigError

logger = logging.getLogger(__name__)

DEFAULT_LISTEN = "127.0.0.1:9155"


def parse_listen(addr: str) -> Tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigError(f"listen address must be host:port, got {addr!r}")
    port_num = int(port)
    if port_num > 65535:
        raise ConfigError(f"listen port out of range: {port_num}")
    return host.strip("[]") or "0.0.0.0", port_num


def create_app(registry: GaugeRegistry, clock: Callable[[], float] = time.time) -> Flask:
    app = Flask(__name__)

    @app.after_request
    def add_security_headers(response):
        response.headers['X-Content-Type-Options'] = 'nosniff'
        response.headers['Cache-Control'] = 'no-store'
        return response

    @app.route('/metrics')
    def metrics():
        body = registry.render_exposition(clock())
        return Response(body, status=200, headers={"Content-Type": CONTENT_TYPE})

    @app.route('/healthz')
    def healthz():
        return Response("ok", status=200, mimetype="text/plain")

    return app


class MetricsServer:
    """Threaded werkzeug server hosting the Flask app"""

    def __init__(self, app: Flask, host: str, port: int):
        try:
            self._server = make_server(host, port, app, threaded=True)
        except (OSError, SystemExit) as e:
            # werkzeug exits instead of raising when the port is taken
            raise BindError(f"cannot listen on {host}:{port}: {e}") from None
        self.host = host
        self._thread = threading.Thread(target=self._server.serve_forever, name="metrics-http", daemon=True)
        self._stopped = False

    @property
    def port(self) -> int:
        return self._server.server_port

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"

    def start(self) -> "MetricsServer":
        self._thread.start()
        logger.info(f"Serving metrics on http://{self.address}/metrics")
        return self

    def stop(self) -> None:
        if self._stopped:
            return
        self._stopped = True
        self._server.shutdown()
        self._server.server_close()
        if self._thread.is_alive():
            self._thread.join(timeout=5)


def serve(registry: GaugeRegistry, listen_addr: str = DEFAULT_LISTEN,
          clock: Optional[Callable[[], float]] = None) -> MetricsServer:
    host, port = parse_listen(listen_addr)
    app = create_app(registry, clock or time.time)
    return MetricsServer(app, host, port).start()

"""
Push client: PUTs the exposition body to <url>/metrics/job/<job>

Failures are logged and counted; the next interval simply tries again with a
fresh snapshot (nothing is buffered).
"""

import logging
import threading
import time
from typing import Callable, Optional
from urllib.parse import quote, urlsplit, urlunsplit

import requests
import schedule

from src.metrics.registry import CONTENT_TYPE, PUSH_FAILURES, GaugeRegistry

logger = logging.getLogger(__name__)

DEFAULT_JOB = "vinevi"
DEFAULT_PUSH_INTERVAL = 15.0
REQUEST_TIMEOUT = 5.0


def push_endpoint(url: str, job: str) -> str:
    if not job:
        raise ValueError("push job name must not be empty")
    parts = urlsplit(url)
    if parts.scheme not in ("http", "https") or not parts.netloc:
        raise ValueError(f"push url must be an http(s) URL, got {redact_url(url)!r}")
    return f"{url.rstrip('/')}/metrics/job/{quote(job, safe='')}"


def redact_url(url: str) -> str:
    """Drop user:password from a URL before logging it"""
    parts = urlsplit(url)
    if parts.username is None and parts.password is None:
        return url
    host = parts.hostname or ""
    if parts.port:
        host = f"{host}:{parts.port}"
    return urlunsplit((parts.scheme, host, parts.path, parts.query, parts.fragment))


class MetricsPusher:
    """Periodic background push of a registry snapshot"""

    def __init__(self, registry: GaugeRegistry, url: str, job: str = DEFAULT_JOB,
                 interval: float = DEFAULT_PUSH_INTERVAL,
                 session: Optional[requests.Session] = None,
                 clock: Callable[[], float] = time.time):
        if interval <= 0:
            raise ValueError("push interval must be positive")
        self.registry = registry
        self.endpoint = push_endpoint(url, job)
        self.interval = interval
        self.failures = 0
        self.pushes = 0
        self._session = session or requests.Session()
        self._clock = clock
        self._scheduler = schedule.Scheduler()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        # register the family so it renders as 0 before the first failure
        self.registry.set_gauge(PUSH_FAILURES, "Failed metric pushes since start", 0)

    def push_once(self) -> bool:
        body = self.registry.render_exposition(self._clock())
        try:
            response = self._session.put(
                self.endpoint,
                data=body.encode("utf-8"),
                headers={"Content-Type": CONTENT_TYPE},
                timeout=REQUEST_TIMEOUT,
            )
            response.raise_for_status()
        except requests.exceptions.RequestException as e:
            self.failures += 1
            self.registry.set_gauge(PUSH_FAILURES, "Failed metric pushes since start", self.failures)
            logger.warning(f"Push to {redact_url(self.endpoint)} failed ({self.failures} so far): "
                           f"{type(e).__name__}: {str(e)[:100]}")
            return False
        self.pushes += 1
        logger.debug(f"Pushed {len(body)} bytes to {redact_url(self.endpoint)}")
        return True

    def _loop(self) -> None:
        tick = min(self.interval, 0.5)
        while not self._stop.is_set():
            self._scheduler.run_pending()
            self._stop.wait(tick)

    def start(self) -> "MetricsPusher":
        if self._thread is not None:
            return self
        self._scheduler.every(self.interval).seconds.do(self.push_once)
        self._thread = threading.Thread(target=self._loop, name="metrics-push", daemon=True)
        self._thread.start()
        logger.info(f"Pushing metrics to {redact_url(self.endpoint)} every {self.interval:g}s")
        return self

    def stop(self, final_push: bool = True) -> None:
        if self._thread is None:
            return
        self._stop.set()
        self._thread.join(timeout=self.interval + REQUEST_TIMEOUT)
        self._thread = None
        self._scheduler.clear()
        if final_push:
            self.push_once()


def push(registry: GaugeRegistry, url: str, job: str = DEFAULT_JOB,
         interval: float = DEFAULT_PUSH_INTERVAL) -> MetricsPusher:
    return MetricsPusher(registry, url, job, interval).start()

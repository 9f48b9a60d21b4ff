import argparse

def handle_input(command: str, user_input: str):
    """
    Receive user input through CLI and interpret commands.

    Parameters:
    - command (str): The command requested by the user
    - user_input (str): Additional input required for specific commands
    """
    parser = argparse.ArgumentParser(description="User Command Interpreter")

    # Define subparsers for different commands
    subparsers = parser.add_subparsers(title="Commands", dest="command")

    # RegisterUser command
    register_parser = subparsers.add_parser("register", help="Register a new user")
    register_parser.add_argument("username", type=str, help="Username")
    register_parser.add_argument("password", type=str, help="Password")
    register_parser.add_argument("role", choices=["admin", "regular"], help="User role")

    # AuthenticateUser command
    authenticate_parser = subparsers.add_parser("authenticate", help="Authenticate user")
    authenticate_parser.add_argument("username", type=str, help="Username")
    authenticate_parser.add_argument("password", type=str, help="Password")

    # AddTask command
    add_task_parser = subparsers.add_parser("add_task", help="Add a new task")
    add_task_parser.add_argument("description", type=str, help="Task description")

    # Other commands can be added similarly...

    try:
        parsed_args = parser.parse_args(command.split())
        if parsed_args.command == "add_task":
            add_task(parsed_args.description)
        else:
            # Implement other command handling logic here...
            pass
    except argparse.ArgumentError as e:
        print(f"Invalid input: {e}")

import argparse
import datetime

def execute_command(command, args):

    # Command handlers (add more as needed)
    command_handlers = {
        'registerUser': handle_register_user,
        'authenticateUser': authenticate_user,
        'assignRole': assign_role,
        'updateUserDetails': update_user_details,
        'createProject': create_project,
        'updateProject': update_project,
        'deleteProject': delete_project,
        'listProjects': list_projects,
        'createTask': create_task,
        'updateTask': update_task,
        'assignTask': assign_task,
        'trackTaskProgress': track_task_progress,
        'saveData': save_data,
        'loadData': load_data,
        'backupAndSync': backup_and_sync,
        'handleInput': handle_input,
        'searchProjects': search_projects,
        'searchTasks': search_tasks,
        'generateReport': generate_report,
        'displayReport': display_report,
        'assignTeamMember': assign_team_member,
        'viewProjectProgress': view_project_progress,
        'updateTaskAssignment': update_task_assignment,
        'checkPermission': check_permission,
        'denyUnauthorizedAccess': deny_unauthorized_access,
    }

    if command in command_handlers:
        return command_handlers[command](args)
    else:
        raise NotImplementedError(f"Command '{command}' not recognized.")

# Implement each handler function here
def handle_register_user(args):
    # Implementation for registerUser
    pass

def handle_input(args):
    # Interpretation of user input and call executeCommand with appropriate command
    parsed_command = args.command
    parsed_args = parse_command_args(parsed_command, args.input)
    execute_command(parsed_command, parsed_args)

# Helper function to parse command and its arguments
def parse_command_args(command, user_input):
    # Example: using argparse for simple parsing
    parser = argparse.ArgumentParser()
    # Add parsers for each command
    subparsers = parser.add_subparsers(dest='command')
    register_user_parser = subparsers.add_parser('registerUser')
    register_user_parser.add_argument('username', ...)
    register_user_parser.add_argument('password', ...)
    return parser.parse_args(user_input.split())

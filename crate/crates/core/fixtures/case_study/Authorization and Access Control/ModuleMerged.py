    # permissions.py
def check_permission(user_role, action, resource_type, resource_id=None):
    
    # Define a dictionary mapping roles to allowed actions for each resource type
    # In a real-world scenario, fetch these permissions from a database or config file
    allowed_permissions = {
        'project': {
            'Admin': ['createProject', 'updateProject', 'deleteProject', 'listProjects'],
            'Regular User': ['viewProjectProgress']
        },
        'task': {
            'Admin': ['createTask', 'updateTask', 'assignTask', 'trackTaskProgress'],
            'Regular User': ['assignTask', 'viewTaskProgress']
        }
    }

    if user_role not in allowed_permissions[resource_type]:
        return False

    if action not in allowed_permissions[resource_type][user_role]:
        return False

    # If resource_id is required and not provided, deny access
    if resource_id is not None and resource_id < 1:
        return False

    return True


def deny_unauthorized_access(action: str, user_role: str, required_role: str):
    if user_role != required_role:
        raise PermissionError(f"Unauthorized access denied. Action '{action}' requires {required_role} role.")


# main.py
from permissions import check_permission, deny_unauthorized_access

def main():
    try:
        # Example usage
        user_role = "Admin"
        action = "createProject"
        resource_type = "project"

        # Check permission
        if not check_permission(user_role, action, resource_type):
            print("User does not have permission to perform the action.")
        else:
            print("User has permission to perform the action.")

        # Deny unauthorized access
        deny_unauthorized_access("createTask", user_role, "Admin")
    except PermissionError as e:
        print(e)

if __name__ == "__main__":
    main()

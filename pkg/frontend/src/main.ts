// Browser entry point: restore state from the URL, mount the explorer,
// and keep the URL in sync so views can be shared as links.

import { ApiClient } from "./api.js";
import { createExplorer } from "./app.js";
import { decodeState } from "./state.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

const client = new ApiClient("");
const initial = decodeState(window.location.search.replace(/^\?/, ""));
const explorer = createExplorer(root, client, initial, {
  onStateChange: (query) => {
    window.history.replaceState(null, "", `?${query}`);
  },
});

void explorer.refresh();

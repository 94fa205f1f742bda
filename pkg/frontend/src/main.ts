/** Bootstrap: wire the panel to the API served from the same origin. */

import { ApiClient } from "./api.js";
import { OperatorPanel } from "./panel.js";
import { EventFeed } from "./sse.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app container");
const api = new ApiClient("");
const panel = new OperatorPanel(root, api, (handlers) => new EventFeed("", handlers));
void panel.init();

// Browser entry point: mount the console against the gateway named by the
// ?gateway= query parameter (defaults to the page's own origin).

import { initApp } from './app.js';

const params = new URLSearchParams(window.location.search);
const base = params.get('gateway') ?? window.location.origin;
initApp(document.getElementById('app')!, base);
